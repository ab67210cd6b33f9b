#include "bmdal/oracles.hpp"

#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <random>

namespace bmdal::oracle {

namespace {

void guard(Eigen::Index n) {
    if (n > kMaxPoints) throw ConfigError("oracle instance too large");
}

Mat sub(const Mat& g, const Indices& r, const Indices& c) {
    Mat out(r.size(), c.size());
    for (std::size_t a = 0; a < r.size(); ++a)
        for (std::size_t b = 0; b < c.size(); ++b) out(a, b) = g(r[a], c[b]);
    return out;
}

double act(Activation a, double z) {
    if (a == Activation::relu) return z > 0 ? z : 0.0;
    return z / (1.0 + std::exp(-z));
}

double act_prime(Activation a, double z) {
    if (a == Activation::relu) return z > 0 ? 1.0 : 0.0;
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

double scalar_forward(const ModelParams& p, const ModelConfig& cfg, const Vec& x0) {
    Vec x = x0;
    const int L = cfg.depth();
    for (int l = 0; l < L; ++l) {
        Vec z = cfg.sigma_w / std::sqrt(double(cfg.widths[l])) * (p.W[l] * x) + cfg.sigma_b * p.b[l];
        if (l + 1 == L) return z[0];
        x = z.unaryExpr([&](double v) { return act(cfg.activation, v); });
    }
    return 0.0;
}

Eigen::Index param_count(const ModelConfig& cfg) {
    Eigen::Index n = 0;
    for (int l = 0; l < cfg.depth(); ++l) n += cfg.widths[l + 1] * (cfg.widths[l] + 1);
    return n;
}

}  // namespace

double naive_posterior(const Mat& gram, const Indices& obs, double sigma2, int i, int j) {
    guard(gram.rows());
    if (obs.empty()) return gram(i, j);
    Mat A = sub(gram, obs, obs) + sigma2 * Mat::Identity(obs.size(), obs.size());
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible()) throw NumericalError("singular observation matrix");
    Vec ki = sub(gram, obs, {i});
    Vec kj = sub(gram, obs, {j});
    return gram(i, j) - ki.dot(lu.solve(kj));
}

Indices naive_greedy_maxdet(const Mat& gram, double sigma2, int n_batch, const Indices& mode,
                            const Indices& pool) {
    guard(gram.rows());
    Indices cands = pool;
    if (cands.empty())
        for (int i = 0; i < gram.rows(); ++i) cands.push_back(i);
    Indices sel = mode;
    Indices batch;
    std::vector<bool> used(gram.rows(), false);
    for (int i : mode) used[i] = true;
    for (int step = 0; step < n_batch; ++step) {
        int best = -1;
        double best_det = -kInf;
        for (int x : cands) {
            if (used[x]) continue;
            Indices s = sel;
            s.push_back(x);
            Mat A = sub(gram, s, s) + sigma2 * Mat::Identity(s.size(), s.size());
            const double det = Eigen::FullPivLU<Mat>(A).determinant();
            if (det > best_det) {
                best_det = det;
                best = x;
            }
        }
        if (best < 0) break;
        used[best] = true;
        sel.push_back(best);
        batch.push_back(best);
    }
    return batch;
}

double naive_bait_objective(const Mat& features, const Indices& tp, const Indices& sel,
                            double sigma2) {
    guard(features.rows());
    const Mat gram = features * features.transpose();
    double s = 0.0;
    for (int x : tp) s += naive_posterior(gram, sel, sigma2, x, x);
    return s;
}

double cover_radius(const Mat& gram, const Indices& pool, const Indices& mode, const Indices& batch) {
    guard(gram.rows());
    double radius = 0.0;
    for (int x : pool) {
        double best = kInf;
        for (const Indices* set : {&mode, &batch})
            for (int c : *set) {
                const double d2 = gram(x, x) + gram(c, c) - 2.0 * gram(x, c);
                best = std::min(best, std::sqrt(std::max(d2, 0.0)));
            }
        radius = std::max(radius, best);
    }
    return radius;
}

double brute_force_cover_radius(const Mat& gram, int n_batch, const Indices& mode,
                                const Indices& pool) {
    guard(gram.rows());
    if (n_batch > static_cast<int>(pool.size())) throw ConfigError("batch larger than pool");
    double best = kInf;
    Indices batch;
    std::function<void(std::size_t)> rec = [&](std::size_t start) {
        if (static_cast<int>(batch.size()) == n_batch) {
            best = std::min(best, cover_radius(gram, pool, mode, batch));
            return;
        }
        for (std::size_t i = start; i < pool.size(); ++i) {
            batch.push_back(pool[i]);
            rec(i + 1);
            batch.pop_back();
        }
    };
    rec(0);
    return best;
}

Mat explicit_jacobian(const ModelParams& params, const ModelConfig& cfg, const Mat& X) {
    guard(X.rows());
    const int L = cfg.depth();
    for (int w : cfg.widths)
        if (w > 16 && w != cfg.widths.front()) throw ConfigError("oracle widths limited to 16");
    Mat J(X.rows(), param_count(cfg));
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        // Forward pass, keeping pre-activations and activations.
        std::vector<Vec> xs{X.row(n).transpose()}, zs;
        for (int l = 0; l < L; ++l) {
            Vec z = cfg.sigma_w / std::sqrt(double(cfg.widths[l])) * (params.W[l] * xs.back()) +
                    cfg.sigma_b * params.b[l];
            zs.push_back(z);
            xs.push_back(z.unaryExpr([&](double v) { return act(cfg.activation, v); }));
        }
        Eigen::Index col = 0;
        for (int l = 0; l < L; ++l) {
            const int dout = cfg.widths[l + 1], din = cfg.widths[l];
            const double s = cfg.sigma_w / std::sqrt(double(din));
            for (int k = 0; k <= din; ++k) {
                for (int i = 0; i < dout; ++i) {
                    // Tangent of z^(l) for a perturbation of one parameter.
                    Vec dz = Vec::Zero(dout);
                    dz[i] = k < din ? s * xs[l][k] : cfg.sigma_b;
                    for (int m = l + 1; m < L; ++m) {
                        Vec dx = dz.cwiseProduct(
                            zs[m - 1].unaryExpr([&](double v) { return act_prime(cfg.activation, v); }));
                        dz = cfg.sigma_w / std::sqrt(double(cfg.widths[m])) * (params.W[m] * dx);
                    }
                    // W row-major then b.
                    const Eigen::Index idx = k < din ? col + Eigen::Index(i) * din + k
                                                     : col + Eigen::Index(dout) * din + i;
                    J(n, idx) = dz[0];
                }
            }
            col += Eigen::Index(dout) * (din + 1);
        }
    }
    return J;
}

Mat explicit_ntk(const ModelParams& params, const ModelConfig& config, const Mat& X) {
    const Mat J = explicit_jacobian(params, config, X);
    return J * J.transpose();
}

Mat finite_difference_jacobian(const ModelParams& params, const ModelConfig& cfg, const Mat& X,
                               double h) {
    guard(X.rows());
    ModelParams p = params;
    Mat J(X.rows(), param_count(cfg));
    auto column = [&](double& theta, Eigen::Index idx) {
        const double orig = theta;
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            theta = orig + h;
            const double fp = scalar_forward(p, cfg, X.row(n).transpose());
            theta = orig - h;
            const double fm = scalar_forward(p, cfg, X.row(n).transpose());
            J(n, idx) = (fp - fm) / (2.0 * h);
        }
        theta = orig;
    };
    Eigen::Index col = 0;
    for (int l = 0; l < cfg.depth(); ++l) {
        for (Eigen::Index i = 0; i < p.W[l].rows(); ++i)
            for (Eigen::Index k = 0; k < p.W[l].cols(); ++k) column(p.W[l](i, k), col++);
        for (Eigen::Index i = 0; i < p.b[l].size(); ++i) column(p.b[l][i], col++);
    }
    return J;
}

Mat mc_nngp(const ModelConfig& cfg, const Mat& X, int n_samples, std::uint64_t seed,
            bool integrate_last_layer) {
    guard(X.rows());
    if (cfg.activation != Activation::relu) throw UnsupportedError("mc_nngp expects relu");
    const int L = cfg.depth();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat acc = Mat::Zero(X.rows(), X.rows());
    for (int s = 0; s < n_samples; ++s) {
        // Columns are samples here; biases are zero at initialization.
        Mat h = X.transpose();
        for (int l = 0; l + 1 < L; ++l) {
            Mat W(cfg.widths[l + 1], cfg.widths[l]);
            for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = normal(rng);
            h = (cfg.sigma_w / std::sqrt(double(cfg.widths[l])) * (W * h)).cwiseMax(0.0);
        }
        const double s2 = cfg.sigma_w * cfg.sigma_w / double(cfg.widths[L - 1]);
        if (integrate_last_layer) {
            acc += s2 * (h.transpose() * h);
        } else {
            Vec w(cfg.widths[L - 1]);
            for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = normal(rng);
            const Vec f = std::sqrt(s2) * (h.transpose() * w);
            acc += f * f.transpose();
        }
    }
    return acc / double(n_samples);
}

}  // namespace bmdal::oracle
