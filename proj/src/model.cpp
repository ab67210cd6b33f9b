#include "bmdal/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace bmdal {

namespace {

template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVecT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
struct NetT {
    std::vector<MatT<S>> W;
    std::vector<VecT<S>> b;
};

template <class S>
NetT<S> cast_params(const ModelParams& p) {
    NetT<S> n;
    for (const auto& w : p.W) n.W.push_back(w.template cast<S>());
    for (const auto& b : p.b) n.b.push_back(b.template cast<S>());
    return n;
}

template <class S>
ModelParams uncast_params(const NetT<S>& n) {
    ModelParams p;
    for (const auto& w : n.W) p.W.push_back(w.template cast<double>());
    for (const auto& b : n.b) p.b.push_back(b.template cast<double>());
    return p;
}

template <class S>
MatT<S> activate(const MatT<S>& z, Activation act) {
    if (act == Activation::relu) return z.cwiseMax(S(0));
    return z.unaryExpr([](S v) { return v / (S(1) + std::exp(-v)); });
}

template <class S>
MatT<S> activate_deriv(const MatT<S>& z, Activation act) {
    if (act == Activation::relu) return z.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); });
    return z.unaryExpr([](S v) {
        S sg = S(1) / (S(1) + std::exp(-v));
        return sg * (S(1) + v * (S(1) - sg));
    });
}

template <class S>
S layer_scale(const ModelConfig& c, int l) {
    return static_cast<S>(c.sigma_w / std::sqrt(static_cast<double>(c.widths[l - 1])));
}

// Forward pass on rows of X. zs[l-1], xs[l-1] hold layer l; xs[L-1] == zs[L-1].
template <class S>
void forward_impl(const NetT<S>& net, const ModelConfig& c, const MatT<S>& X,
                  std::vector<MatT<S>>& zs, std::vector<MatT<S>>& xs) {
    const int L = c.depth();
    zs.resize(L);
    xs.resize(L);
    const S sb = static_cast<S>(c.sigma_b);
    for (int l = 1; l <= L; ++l) {
        const MatT<S>& prev = (l == 1) ? X : xs[l - 2];
        MatT<S> z = layer_scale<S>(c, l) * (prev * net.W[l - 1].transpose());
        z.rowwise() += (sb * net.b[l - 1]).transpose();
        zs[l - 1] = std::move(z);
        xs[l - 1] = (l == L) ? zs[l - 1] : activate<S>(zs[l - 1], c.activation);
    }
}

void check_input(const ModelConfig& c, const Mat& X) {
    if (X.cols() != c.widths.front())
        throw ConfigError("input has " + std::to_string(X.cols()) + " columns, network expects " +
                          std::to_string(c.widths.front()));
}

template <class S>
ForwardResult forward_typed(const ModelParams& params, const ModelConfig& c, const Mat& X) {
    NetT<S> net = cast_params<S>(params);
    std::vector<MatT<S>> zs, xs;
    forward_impl<S>(net, c, X.template cast<S>(), zs, xs);
    ForwardResult r;
    r.predictions = zs.back().col(0).template cast<double>();
    for (int l = 0; l < c.depth(); ++l) {
        r.cache.z.push_back(zs[l].template cast<double>());
        r.cache.x.push_back(xs[l].template cast<double>());
    }
    return r;
}

template <class S>
Mat ll_features_typed(const ModelParams& params, const ModelConfig& c, const Mat& X) {
    const int L = c.depth();
    NetT<S> net = cast_params<S>(params);
    MatT<S> Xs = X.template cast<S>();
    std::vector<MatT<S>> zs, xs;
    forward_impl<S>(net, c, Xs, zs, xs);
    const MatT<S>& prev = (L == 1) ? Xs : xs[L - 2];
    MatT<S> f(prev.rows(), prev.cols() + 1);
    f.leftCols(prev.cols()) = layer_scale<S>(c, L) * prev;
    f.col(prev.cols()).setConstant(static_cast<S>(c.sigma_b));
    return f.template cast<double>();
}

template <class S>
GradFactors grad_factors_typed(const ModelParams& params, const ModelConfig& c, const Mat& X) {
    const int L = c.depth();
    NetT<S> net = cast_params<S>(params);
    MatT<S> Xs = X.template cast<S>();
    std::vector<MatT<S>> zs, xs;
    forward_impl<S>(net, c, Xs, zs, xs);
    const Eigen::Index n = X.rows();

    GradFactors g;
    g.in.resize(L);
    g.out.resize(L);
    for (int l = 1; l <= L; ++l) {
        const MatT<S>& prev = (l == 1) ? Xs : xs[l - 2];
        MatT<S> in(n, prev.cols() + 1);
        in.leftCols(prev.cols()) = layer_scale<S>(c, l) * prev;
        in.col(prev.cols()).setConstant(static_cast<S>(c.sigma_b));
        g.in[l - 1] = in.template cast<double>();
    }
    MatT<S> out = MatT<S>::Ones(n, 1);
    g.out[L - 1] = out.template cast<double>();
    for (int l = L - 1; l >= 1; --l) {
        out = (layer_scale<S>(c, l + 1) * (out * net.W[l])).cwiseProduct(
            activate_deriv<S>(zs[l - 1], c.activation));
        g.out[l - 1] = out.template cast<double>();
    }
    return g;
}

struct AdamSlot {
    MatF m, v;
};

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "silu") return Activation::silu;
    throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "silu"; }

void ModelConfig::validate() const {
    if (widths.size() < 2) throw ConfigError("network needs at least one layer");
    for (int w : widths)
        if (w < 1) throw ConfigError("layer widths must be positive");
    if (widths.back() != 1) throw ConfigError("output width must be 1");
    if (!(sigma_w > 0) || !(sigma_b > 0)) throw ConfigError("sigma_w and sigma_b must be positive");
}

ModelConfig ModelConfig::standard(int d_in, const std::vector<int>& hidden, Activation act,
                                  std::uint64_t seed) {
    ModelConfig c;
    c.widths.push_back(d_in);
    c.widths.insert(c.widths.end(), hidden.begin(), hidden.end());
    c.widths.push_back(1);
    c.activation = act;
    if (act == Activation::relu) {
        c.sigma_w = 0.2;
        c.sigma_b = 0.2;
    } else {
        c.sigma_w = 0.5;
        c.sigma_b = 1.0;
    }
    c.init_seed = seed;
    return c;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (minibatch_size < 1) throw ConfigError("minibatch size must be at least 1");
    if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1))
        throw ConfigError("Adam betas must lie in (0, 1)");
    if (!(initial_lr >= 0)) throw ConfigError("learning rate must be non-negative");
}

TrainConfig TrainConfig::defaults(Activation act) {
    TrainConfig t;
    t.initial_lr = act == Activation::relu ? 0.375 : 0.15;
    return t;
}

ModelParams init_network(const ModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.init_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ModelParams p;
    for (int l = 1; l <= config.depth(); ++l) {
        Mat w(config.widths[l], config.widths[l - 1]);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
        p.W.push_back(std::move(w));
        p.b.push_back(Vec::Zero(config.widths[l]));
    }
    return p;
}

ForwardResult forward(const ModelParams& params, const ModelConfig& config, const Mat& X,
                      Precision precision) {
    config.validate();
    check_input(config, X);
    return precision == Precision::f32 ? forward_typed<float>(params, config, X)
                                       : forward_typed<double>(params, config, X);
}

Vec predict(const TrainedModel& model, const Mat& X, Precision precision) {
    return forward(model.params, model.config, X, precision).predictions;
}

TrainedModel train(const ModelParams& params, const ModelConfig& config, const TrainConfig& tc,
                   const Mat& X_train, const Vec& y_train, const Mat& X_valid, const Vec& y_valid) {
    config.validate();
    tc.validate();
    check_input(config, X_train);
    check_input(config, X_valid);
    if (X_train.rows() < 1) throw ConfigError("training set is empty");
    if (X_valid.rows() < 1) throw ConfigError("validation set is empty");
    if (X_train.rows() != y_train.size() || X_valid.rows() != y_valid.size())
        throw ConfigError("label count does not match input rows");

    const int L = config.depth();
    const int n = static_cast<int>(X_train.rows());
    const int bs = std::min(tc.minibatch_size, n);
    const int steps_per_epoch = (n + bs - 1) / bs;
    const double total_steps = static_cast<double>(steps_per_epoch) * tc.epochs;
    const float sb = static_cast<float>(config.sigma_b);
    const float b1 = static_cast<float>(tc.adam_beta1);
    const float b2 = static_cast<float>(tc.adam_beta2);
    const float eps = static_cast<float>(tc.adam_eps);

    NetT<float> net = cast_params<float>(params);
    NetT<float> best = net;
    const MatF Xt = X_train.cast<float>();
    const VecF yt = y_train.cast<float>();
    const MatF Xv = X_valid.cast<float>();
    const VecF yv = y_valid.cast<float>();

    std::vector<AdamSlot> adam_w(L), adam_b(L);
    for (int l = 0; l < L; ++l) {
        adam_w[l] = {MatF::Zero(net.W[l].rows(), net.W[l].cols()),
                     MatF::Zero(net.W[l].rows(), net.W[l].cols())};
        adam_b[l] = {MatF::Zero(net.b[l].size(), 1), MatF::Zero(net.b[l].size(), 1)};
    }
    std::vector<float> scale(L);
    for (int l = 1; l <= L; ++l) scale[l - 1] = layer_scale<float>(config, l);

    std::mt19937_64 rng(tc.train_seed);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    TrainedModel result;
    result.config = config;
    double best_rmse = kInf;
    long step = 0;
    std::vector<MatF> zs, xs;
    MatF Xb, G;
    VecF yb;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int start = 0; start < n; start += bs) {
            const int cnt = std::min(bs, n - start);
            Xb.resize(cnt, Xt.cols());
            yb.resize(cnt);
            for (int i = 0; i < cnt; ++i) {
                Xb.row(i) = Xt.row(perm[start + i]);
                yb[i] = yt[perm[start + i]];
            }
            forward_impl<float>(net, config, Xb, zs, xs);
            VecF resid = zs.back().col(0) - yb;
            const float loss = resid.squaredNorm() / static_cast<float>(cnt);
            if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", epoch);

            const float lr = static_cast<float>(tc.initial_lr * (1.0 - step / total_steps));
            ++step;
            const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step));
            const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step));

            G = (2.0f / static_cast<float>(cnt)) * resid;
            for (int l = L; l >= 1; --l) {
                const MatF& prev = (l == 1) ? Xb : xs[l - 2];
                MatF gW = scale[l - 1] * (G.transpose() * prev);
                MatF gb = sb * G.colwise().sum().transpose();
                if (l > 1)
                    G = (scale[l - 1] * (G * net.W[l - 1]))
                            .cwiseProduct(activate_deriv<float>(zs[l - 2], config.activation));
                auto update = [&](MatF& theta, AdamSlot& s, const MatF& g) {
                    s.m = b1 * s.m + (1.0f - b1) * g;
                    s.v = b2 * s.v + (1.0f - b2) * g.cwiseAbs2();
                    theta.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps);
                };
                update(net.W[l - 1], adam_w[l - 1], gW);
                MatF bcol = net.b[l - 1];
                update(bcol, adam_b[l - 1], gb);
                net.b[l - 1] = bcol.col(0);
            }
        }
        std::vector<MatF> vz, vx;
        forward_impl<float>(net, config, Xv, vz, vx);
        const double rmse =
            std::sqrt(static_cast<double>((vz.back().col(0) - yv).squaredNorm()) / yv.size());
        result.train_history.push_back(rmse);
        if (rmse < best_rmse) {
            best_rmse = rmse;
            best = net;
            result.best_epoch = epoch;
        }
    }
    if (result.best_epoch < 0) throw TrainingError("validation error never finite", tc.epochs - 1);
    result.params = uncast_params(best);
    return result;
}

Mat extract_ll_features(const ModelParams& params, const ModelConfig& config, const Mat& X,
                        Precision precision) {
    config.validate();
    check_input(config, X);
    return precision == Precision::f32 ? ll_features_typed<float>(params, config, X)
                                       : ll_features_typed<double>(params, config, X);
}

Mat extract_ll_features(const TrainedModel& model, const Mat& X, Precision precision) {
    return extract_ll_features(model.params, model.config, X, precision);
}

GradFactors extract_grad_factors(const ModelParams& params, const ModelConfig& config,
                                 const Mat& X, Precision precision) {
    config.validate();
    check_input(config, X);
    return precision == Precision::f32 ? grad_factors_typed<float>(params, config, X)
                                       : grad_factors_typed<double>(params, config, X);
}

GradFactors extract_grad_factors(const TrainedModel& model, const Mat& X, Precision precision) {
    return extract_grad_factors(model.params, model.config, X, precision);
}

}  // namespace bmdal
