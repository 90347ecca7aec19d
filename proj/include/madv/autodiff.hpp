#pragma once

#include "madv/core.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace madv {

class GradTape;

/// Value and gradient of a scalar objective at one point.
struct ValueGrad {
    double value = 0.0;
    VectorXd grad;
};

/// Handle to a node on a GradTape.
struct Var {
    GradTape* tape = nullptr;
    int index = -1;

    double value() const;
};

/// Scalar reverse-mode tape. Built fresh for every evaluation and discarded
/// after the backward sweep.
class GradTape {
public:
    Var variable(double value) { return push(value, -1, 0.0, -1, 0.0, "input"); }
    Var constant(double value) { return push(value, -1, 0.0, -1, 0.0, "constant"); }

    Var push(double value, int a, double da, int b, double db, const char* op) {
        nodes_.push_back({value, a, b, da, db, op});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    double value(int i) const { return nodes_[i].value; }
    std::size_t size() const { return nodes_.size(); }

    /// Adjoints of every node w.r.t. `output`. Throws NumericError naming the
    /// first operation that produced a non-finite value.
    std::vector<double> backward(Var output) const {
        for (const auto& n : nodes_) {
            if (!std::isfinite(n.value) || !std::isfinite(n.da) || !std::isfinite(n.db))
                throw NumericError(std::string("non-finite value produced by '") + n.op + "'");
        }
        std::vector<double> adj(nodes_.size(), 0.0);
        adj[output.index] = 1.0;
        for (int i = output.index; i >= 0; --i) {
            const auto& n = nodes_[i];
            if (adj[i] == 0.0) continue;
            if (n.a >= 0) adj[n.a] += adj[i] * n.da;
            if (n.b >= 0) adj[n.b] += adj[i] * n.db;
        }
        return adj;
    }

private:
    struct Node {
        double value;
        int a, b;
        double da, db;
        const char* op;
    };
    std::vector<Node> nodes_;
};

inline double Var::value() const { return tape->value(index); }

inline Var operator+(Var x, Var y) { return x.tape->push(x.value() + y.value(), x.index, 1.0, y.index, 1.0, "add"); }
inline Var operator-(Var x, Var y) { return x.tape->push(x.value() - y.value(), x.index, 1.0, y.index, -1.0, "sub"); }
inline Var operator*(Var x, Var y) {
    return x.tape->push(x.value() * y.value(), x.index, y.value(), y.index, x.value(), "mul");
}
inline Var operator/(Var x, Var y) {
    const double q = x.value() / y.value();
    return x.tape->push(q, x.index, 1.0 / y.value(), y.index, -q / y.value(), "div");
}
inline Var operator-(Var x) { return x.tape->push(-x.value(), x.index, -1.0, -1, 0.0, "neg"); }
inline Var operator+(Var x, double c) { return x.tape->push(x.value() + c, x.index, 1.0, -1, 0.0, "add"); }
inline Var operator+(double c, Var x) { return x + c; }
inline Var operator-(Var x, double c) { return x + (-c); }
inline Var operator-(double c, Var x) { return x.tape->push(c - x.value(), x.index, -1.0, -1, 0.0, "sub"); }
inline Var operator*(Var x, double c) { return x.tape->push(x.value() * c, x.index, c, -1, 0.0, "mul"); }
inline Var operator*(double c, Var x) { return x * c; }
inline Var operator/(Var x, double c) { return x * (1.0 / c); }

inline Var tanh(Var x) {
    const double t = std::tanh(x.value());
    return x.tape->push(t, x.index, 1.0 - t * t, -1, 0.0, "tanh");
}
inline Var exp(Var x) {
    const double e = std::exp(x.value());
    return x.tape->push(e, x.index, e, -1, 0.0, "exp");
}
inline Var log(Var x) { return x.tape->push(std::log(x.value()), x.index, 1.0 / x.value(), -1, 0.0, "log"); }
inline Var sqrt(Var x) {
    const double s = std::sqrt(x.value());
    return x.tape->push(s, x.index, 0.5 / s, -1, 0.0, "sqrt");
}
inline Var square(Var x) { return x.tape->push(x.value() * x.value(), x.index, 2.0 * x.value(), -1, 0.0, "square"); }

/// Gradient of a scalar function written against the tape. `loss` receives
/// the tape and the input variables and returns the output node.
template <typename Loss>
VectorXd grad(Loss&& loss, const VectorXd& at) {
    GradTape tape;
    std::vector<Var> x;
    x.reserve(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) x.push_back(tape.variable(at[i]));
    Var out = loss(tape, x);
    const auto adj = tape.backward(out);
    VectorXd g(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) g[i] = adj[x[i].index];
    return g;
}

/// Central differences, one coordinate at a time. This is the oracle every
/// analytic gradient in the library is tested against.
template <typename Loss>
VectorXd finite_diff_grad(Loss&& loss, const VectorXd& at, double step) {
    if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
    VectorXd g(at.size());
    VectorXd x = at;
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + step;
        const double up = loss(x);
        x[i] = xi - step;
        const double down = loss(x);
        x[i] = xi;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// max_i |a_i - b_i| / max(1, |a_i|)
inline double gradient_mismatch(const VectorXd& analytic, const VectorXd& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(analytic[i])));
    return worst;
}

}  // namespace madv
