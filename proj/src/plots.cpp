#include "madv/plots.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace madv {

MatrixXd Projection::apply(const MatrixXd& z) const {
    if (!principal) return z;
    return (z.rowwise() - mean) * axes;
}

Projection make_projection(const MatrixXd& basis_rows, int latent_dim) {
    Projection p;
    if (latent_dim == 2) return p;
    p.principal = true;
    p.mean = RowVector<double>::Zero(latent_dim);
    p.axes = MatrixXd::Identity(latent_dim, 2);
    if (basis_rows.rows() < 2) return p;
    p.mean = basis_rows.colwise().mean();
    const MatrixXd centered = basis_rows.rowwise() - p.mean;
    const MatrixXd cov = centered.transpose() * centered / double(basis_rows.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // Eigenvalues come back ascending.
    p.axes.col(0) = es.eigenvectors().col(latent_dim - 1);
    p.axes.col(1) = es.eigenvectors().col(latent_dim - 2);
    return p;
}

namespace {

const std::array<const char*, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Box {
    double x0, y0, w, h;
};

struct Range {
    double lo = 0.0, hi = 1.0;

    void cover(const Eigen::Ref<const VectorXd>& v) {
        if (v.size() == 0) return;
        if (!init) {
            lo = v.minCoeff();
            hi = v.maxCoeff();
            init = true;
        } else {
            lo = std::min(lo, v.minCoeff());
            hi = std::max(hi, v.maxCoeff());
        }
    }
    void pad() {
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
    double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }

    bool init = false;
};

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

void axes(std::ostream& out, const Box& b, const Range& rx, const Range& ry, const std::string& title) {
    out << "<rect x='" << b.x0 << "' y='" << b.y0 << "' width='" << b.w << "' height='" << b.h
        << "' fill='none' stroke='black'/>\n";
    out << "<text x='" << b.x0 + b.w / 2 << "' y='" << b.y0 - 8 << "' text-anchor='middle' font-size='13'>" << title
        << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = rx.lo + (rx.hi - rx.lo) * k / 4.0;
        const double fy = ry.lo + (ry.hi - ry.lo) * k / 4.0;
        const double px = rx.map(fx, b.x0, b.x0 + b.w);
        const double py = ry.map(fy, b.y0 + b.h, b.y0);
        out << "<line x1='" << px << "' y1='" << b.y0 + b.h << "' x2='" << px << "' y2='" << b.y0 + b.h + 4
            << "' stroke='black'/>\n<text x='" << px << "' y='" << b.y0 + b.h + 16
            << "' text-anchor='middle' font-size='10'>" << num(fx) << "</text>\n";
        out << "<line x1='" << b.x0 - 4 << "' y1='" << py << "' x2='" << b.x0 << "' y2='" << py
            << "' stroke='black'/>\n<text x='" << b.x0 - 6 << "' y='" << py + 3
            << "' text-anchor='end' font-size='10'>" << num(fy) << "</text>\n";
    }
}

void open_svg(std::ostream& out, double w, double h, const std::string& title) {
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "' viewBox='0 0 " << w
        << ' ' << h << "'>\n<title>" << title << "</title>\n<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title << "</text>\n";
}

std::ofstream open_file(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

}  // namespace

std::vector<std::string> export_plots(const AttackReport& report, const std::string& out_dir, int bins) {
    require(bins >= 1, "histogram needs at least one bin");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    std::vector<std::string> written;

    const auto& recs = report.records;
    const int d = recs.empty() ? 2 : int(recs.front().z_clean.size());
    MatrixXd clean(recs.size(), d), ours(recs.size(), d), pgd(recs.size(), d);
    std::vector<int> labels(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        clean.row(i) = recs[i].z_clean.transpose();
        ours.row(i) = recs[i].z_adv.transpose();
        pgd.row(i) = recs[i].z_pgd.transpose();
        labels[i] = recs[i].y;
    }
    const Projection proj = make_projection(clean, d);
    const std::array<MatrixXd, 3> panels{proj.apply(clean), proj.apply(ours), proj.apply(pgd)};
    const std::array<const char*, 3> names{"clean", "ours", "pgd"};

    {
        auto csv = open_file(dir / "latents.csv");
        csv << "panel,u,v,label\n";
        for (int p = 0; p < 3; ++p)
            for (Eigen::Index i = 0; i < panels[p].rows(); ++i)
                csv << names[p] << ',' << panels[p](i, 0) << ',' << panels[p](i, 1) << ',' << labels[i] << '\n';
        written.push_back((dir / "latents.csv").string());
    }
    {
        // One shared range keeps the three panels comparable.
        Range rx, ry;
        for (const auto& m : panels) {
            rx.cover(m.col(0));
            ry.cover(m.col(1));
        }
        rx.pad();
        ry.pad();
        const std::string title =
            proj.principal ? "Latent codes (first two principal axes of the clean codes)" : "Latent codes";
        auto svg = open_file(dir / "manifold.svg");
        svg << std::setprecision(6);
        open_svg(svg, 1020, 380, title);
        const std::array<const char*, 3> titles{"clean", "perturbed (ours)", "PGD examples"};
        for (int p = 0; p < 3; ++p) {
            const Box b{50.0 + p * 330.0, 50.0, 290.0, 290.0};
            axes(svg, b, rx, ry, titles[p]);
            for (Eigen::Index i = 0; i < panels[p].rows(); ++i)
                svg << "<circle cx='" << rx.map(panels[p](i, 0), b.x0, b.x0 + b.w) << "' cy='"
                    << ry.map(panels[p](i, 1), b.y0 + b.h, b.y0) << "' r='2' fill='"
                    << kPalette[std::size_t(labels[i]) % kPalette.size()] << "'/>\n";
        }
        svg << "</svg>\n";
        written.push_back((dir / "manifold.svg").string());
    }
    {
        auto csv = open_file(dir / "marginals.csv");
        csv << "dim,bin_lo,bin_hi,clean,perturbed\n";
        auto svg = open_file(dir / "marginals.svg");
        svg << std::setprecision(6);
        const double width = 60.0 + 330.0 * d;
        open_svg(svg, width, 380, "Latent marginals: clean vs perturbed");
        for (int j = 0; j < d; ++j) {
            Range rx;
            rx.cover(clean.col(j));
            rx.cover(ours.col(j));
            rx.pad();
            std::vector<int> hc(bins, 0), ha(bins, 0);
            auto bin_of = [&](double v) { return std::clamp(int((v - rx.lo) / (rx.hi - rx.lo) * bins), 0, bins - 1); };
            for (Eigen::Index i = 0; i < clean.rows(); ++i) {
                ++hc[bin_of(clean(i, j))];
                ++ha[bin_of(ours(i, j))];
            }
            Range ry;
            ry.lo = 0.0;
            ry.hi = 1.0;
            for (int k = 0; k < bins; ++k) ry.hi = std::max<double>(ry.hi, std::max(hc[k], ha[k]));
            const Box b{50.0 + j * 330.0, 50.0, 290.0, 290.0};
            axes(svg, b, rx, ry, "dimension " + std::to_string(j + 1));
            const double bw = b.w / bins;
            for (int k = 0; k < bins; ++k) {
                const double lo = rx.lo + (rx.hi - rx.lo) * k / bins;
                csv << j + 1 << ',' << lo << ',' << lo + (rx.hi - rx.lo) / bins << ',' << hc[k] << ',' << ha[k] << '\n';
                for (int s = 0; s < 2; ++s) {
                    const int count = s == 0 ? hc[k] : ha[k];
                    if (count == 0) continue;
                    const double top = ry.map(count, b.y0 + b.h, b.y0);
                    svg << "<rect x='" << b.x0 + k * bw << "' y='" << top << "' width='" << bw << "' height='"
                        << b.y0 + b.h - top << "' fill='" << (s == 0 ? "#1f77b4" : "#d62728")
                        << "' fill-opacity='0.45'/>\n";
                }
            }
        }
        svg << "</svg>\n";
        written.push_back((dir / "marginals.csv").string());
        written.push_back((dir / "marginals.svg").string());
    }
    return written;
}

}  // namespace madv
