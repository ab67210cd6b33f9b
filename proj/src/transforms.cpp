#include "bmdal/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace bmdal {

namespace {

const Indices& all_rows(int n, Indices& storage) {
    if (static_cast<int>(storage.size()) != n) storage = iota_indices(0, n);
    return storage;
}

// E[relu(u) relu(v)] for (u, v) centered Gaussian with covariance [[a, b], [b, c]].
double relu_expectation(double a, double b, double c) {
    if (a <= 0.0 || c <= 0.0) return 0.0;
    const double s = std::sqrt(a * c);
    const double u = std::clamp(b / s, -1.0, 1.0);
    return s / (2.0 * std::numbers::pi) *
           (std::sqrt(1.0 - u * u) + u * (std::numbers::pi - std::acos(u)));
}

class NngpEvaluator final : public Evaluator {
public:
    NngpEvaluator(const Mat& X, double sigma_w, int depth)
        : X_(X), sw2_(sigma_w * sigma_w), depth_(depth) {}

    double eval(int i, int j) const override {
        const double scale = sw2_ / static_cast<double>(X_.cols());
        double a = scale * X_.row(i).squaredNorm();
        double b = scale * X_.row(i).dot(X_.row(j));
        double c = scale * X_.row(j).squaredNorm();
        for (int l = 1; l < depth_; ++l) {
            const double nb = sw2_ * relu_expectation(a, b, c);
            a = sw2_ * 0.5 * a;
            c = sw2_ * 0.5 * c;
            b = nb;
        }
        return b;
    }

private:
    Mat X_;
    double sw2_;
    int depth_;
};

// k(i, j) - <B[:, i], B[:, j]> with B = L^{-1} k(obs, .), L L^T = k(obs, obs) + sigma^2 I.
class PosteriorEvaluator final : public Evaluator {
public:
    PosteriorEvaluator(Kernel base, Mat B) : base_(std::move(base)), B_(std::move(B)) {}

    double eval(int i, int j) const override { return base_(i, j) - B_.col(i).dot(B_.col(j)); }

    Vec column(int j, const Indices& rows) const override {
        Vec out = base_.column(j, rows);
        out.noalias() -= B_(Eigen::all, rows).transpose() * B_.col(j);
        return out;
    }

private:
    Kernel base_;
    Mat B_;
};

Mat gaussian_draw(int p, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat U(p, d);
    for (Eigen::Index j = 0; j < U.cols(); ++j)
        for (Eigen::Index i = 0; i < U.rows(); ++i) U(i, j) = normal(rng);
    return U;
}

}  // namespace

Kernel base_linear(const GroundSet& ground) { return Kernel::from_features(ground.X); }

Kernel base_last_layer(const TrainedModel& model, const GroundSet& ground, Precision precision) {
    if (model.params.W.empty()) throw ConfigError("model has no parameters");
    return Kernel::from_features(extract_ll_features(model, ground.X, precision));
}

Kernel base_grad(const TrainedModel& model, const GroundSet& ground, Precision precision) {
    if (model.params.W.empty()) throw ConfigError("model has no parameters");
    GradFactors g = extract_grad_factors(model, ground.X, precision);
    const int L = model.config.depth();
    std::vector<ProductTerm> terms;
    for (int l = 0; l < L - 1; ++l) terms.push_back(ProductTerm{1.0, {g.in[l], g.out[l]}});
    // The output sensitivity of the last layer is identically one.
    terms.push_back(ProductTerm{1.0, {g.in[L - 1]}});
    return Kernel::from_terms(ground.size(), std::move(terms));
}

Kernel base_nngp(const ModelConfig& config, const GroundSet& ground) {
    if (config.activation != Activation::relu)
        throw UnsupportedError("the analytic NNGP kernel is only available for relu");
    if (ground.X.cols() < 1) throw ConfigError("inputs have no columns");
    return Kernel::from_evaluator(
        ground.size(), std::make_shared<NngpEvaluator>(ground.X, config.sigma_w, config.depth()));
}

Kernel transform_scale(const Kernel& k, const Indices& train) {
    Indices storage;
    const Indices& rows = train.empty() ? all_rows(k.size(), storage) : train;
    if (rows.empty()) throw ConfigError("cannot scale a kernel on an empty ground set");
    const double mean = k.diagonal(rows).mean();
    if (!(mean > 0)) throw NumericalError("kernel has zero mean diagonal on the training set");
    return k.scaled(1.0 / mean);
}

bool posterior_uses_features(const Kernel& k, const Indices& obs) {
    if (k.has_evaluators()) return false;
    const double d = k.feature_dim();
    if (d > std::max(1024.0, 3.0 * static_cast<double>(obs.size()))) return false;
    return d * static_cast<double>(k.size()) <= kMaterializeCap;
}

Kernel transform_posterior(const Kernel& k, const Indices& obs, double sigma2) {
    if (!(sigma2 > 0)) throw ConfigError("posterior transform requires sigma^2 > 0");
    if (obs.empty()) return k;
    const double sigma = std::sqrt(sigma2);
    if (posterior_uses_features(k, obs)) {
        Mat F = k.features();
        Mat Fo = F(obs, Eigen::all);
        Mat A = Fo.transpose() * Fo;
        A.diagonal().array() += sigma2;
        Eigen::LLT<Mat> llt(A);
        if (llt.info() != Eigen::Success)
            throw NumericalError("posterior factorization failed; try a larger sigma^2");
        Mat G = llt.matrixL().solve(F.transpose());
        return Kernel::from_features(sigma * G.transpose());
    }
    Indices storage;
    const Indices& all = all_rows(k.size(), storage);
    Mat Koo = k.gram(obs);
    Koo.diagonal().array() += sigma2;
    Eigen::LLT<Mat> llt(Koo);
    if (llt.info() != Eigen::Success)
        throw NumericalError("posterior factorization failed; try a larger sigma^2");
    Mat B = llt.matrixL().solve(k.gram(obs, all));
    return Kernel::from_evaluator(k.size(), std::make_shared<PosteriorEvaluator>(k, std::move(B)));
}

Kernel transform_rp(const Kernel& k, int p, std::uint64_t seed, const SketchDraw& draw) {
    if (p < 1) throw ConfigError("random projection dimension must be at least 1");
    if (k.has_evaluators())
        throw UnsupportedError("random projections need an explicit (possibly factored) feature map");
    const double sp = std::sqrt(static_cast<double>(p));
    Mat out = Mat::Zero(k.size(), p);
    std::uint64_t counter = 0;
    for (const auto& t : k.terms()) {
        Mat prod;
        for (const auto& f : t.factors) {
            const std::uint64_t s = derive_seed(seed, "rp", counter++);
            Mat U = draw ? draw(p, static_cast<int>(f.cols()), s)
                         : gaussian_draw(p, static_cast<int>(f.cols()), s);
            Mat sk = (f * U.transpose()) / sp;
            if (prod.size() == 0)
                prod = std::move(sk);
            else
                prod = sp * prod.cwiseProduct(sk);
        }
        out += std::sqrt(t.weight) * prod;
    }
    return Kernel::from_features(std::move(out));
}

Kernel transform_ensemble(const std::vector<Kernel>& kernels) {
    if (kernels.empty()) throw ConfigError("ensemble of zero kernels");
    Kernel k = kernels.front();
    for (std::size_t i = 1; i < kernels.size(); ++i) k = k.plus(kernels[i]);
    return k;
}

Kernel transform_acs_rf(const Kernel& k, int p, double sigma2, const Indices& train,
                        const Vec& train_labels, const Vec& train_predictions, std::uint64_t seed) {
    if (!(sigma2 > 0)) throw ConfigError("acs-rf requires sigma^2 > 0");
    if (p < 1) throw ConfigError("acs-rf needs at least one sample");
    if (static_cast<std::size_t>(train_labels.size()) != train.size() ||
        train_predictions.size() != train_labels.size())
        throw ConfigError("acs-rf labels and predictions must align with the training indices");
    Kernel ks = transform_scale(k, train);
    Kernel kt = transform_posterior(ks, train, sigma2);
    Indices all = iota_indices(0, k.size());
    const Mat Phi = ks.features();
    const Vec kdiag = kt.diagonal(all);
    const Eigen::Index d = Phi.cols();

    Mat Ptr = Phi(train, Eigen::all);
    Mat A = Ptr.transpose() * Ptr;
    A.diagonal().array() += sigma2;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success)
        throw NumericalError("acs-rf posterior factorization failed; try a larger sigma^2");
    const Vec resid = train_labels - train_predictions;
    const Vec mean = llt.solve(Ptr.transpose() * resid);
    // theta = mean + sigma L^{-T} z has covariance sigma^2 A^{-1} = (Phi^T Phi / sigma^2 + I)^{-1}.
    Mat Z = gaussian_draw(static_cast<int>(d), p, derive_seed(seed, "acs-rf"));
    Mat Theta = std::sqrt(sigma2) * llt.matrixU().solve(Z);
    Theta.colwise() += mean;

    Mat T = Phi * Theta;
    Mat F(k.size(), p);
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
        const double ent = 0.5 * std::log1p(kdiag[i] / sigma2);
        for (Eigen::Index j = 0; j < p; ++j)
            F(i, j) = ent - (T(i, j) * T(i, j) + kdiag[i]) / (2.0 * sigma2);
    }
    return Kernel::from_features(F / std::sqrt(static_cast<double>(p)));
}

Kernel transform_acs_grad(const Kernel& k, double sigma2, const Indices& train) {
    if (!(sigma2 > 0)) throw ConfigError("acs-grad requires sigma^2 > 0");
    Kernel ks = transform_scale(k, train);
    Kernel kt = transform_posterior(ks, train, sigma2);
    if (kt.has_evaluators())
        throw UnsupportedError("acs-grad needs an explicit posterior feature map");
    const Mat Ft = kt.features();
    std::vector<ProductTerm> terms;
    for (const auto& t : ks.terms()) {
        ProductTerm nt = t;
        nt.weight /= sigma2 * sigma2;
        nt.factors.push_back(Ft);
        terms.push_back(std::move(nt));
    }
    return Kernel::from_terms(k.size(), std::move(terms));
}

double effective_dim(const Kernel& k, const Indices& pool) {
    const Mat F = k.features(pool);
    const double trace = F.squaredNorm();
    if (trace == 0.0) return 0.0;
    Vec v = Vec::Ones(F.cols()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vec w = F.transpose() * (F * v);
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) break;
        v = w / norm;
        const bool done = it > 0 && std::abs(next - lambda) <= 1e-6 * std::abs(next);
        lambda = next;
        if (done) break;
    }
    if (!(lambda > 0)) return 0.0;
    return trace / lambda;
}

namespace {

Kernel build_range(const KernelSpec& spec, std::size_t end, const KernelContext& ctx, int member) {
    const GroundSet& g = *ctx.ground;
    const TrainedModel* model =
        ctx.models.empty() ? nullptr : ctx.models[std::min<std::size_t>(member, ctx.models.size() - 1)];
    auto need_model = [&]() -> const TrainedModel& {
        if (!model) throw ConfigError("kernel base requires a trained model");
        return *model;
    };
    Kernel k;
    switch (spec.base) {
        case BaseKind::lin: k = base_linear(g); break;
        case BaseKind::ll: k = base_last_layer(need_model(), g, ctx.precision); break;
        case BaseKind::grad: k = base_grad(need_model(), g, ctx.precision); break;
        case BaseKind::nngp: k = base_nngp(need_model().config, g); break;
    }
    for (std::size_t i = 0; i < end; ++i) {
        const Transform& t = spec.transforms[i];
        const std::uint64_t s = derive_seed(ctx.seed, "transform", i * 1000003ULL + member);
        switch (t.kind) {
            case Transform::Kind::scale: k = transform_scale(k, g.train); break;
            case Transform::Kind::post: k = transform_posterior(k, g.train, t.sigma2); break;
            case Transform::Kind::rp: k = transform_rp(k, t.p, s); break;
            case Transform::Kind::acs_rf:
                k = transform_acs_rf(k, t.p, t.sigma2, g.train, ctx.train_labels,
                                     ctx.train_predictions, s);
                break;
            case Transform::Kind::acs_grad: k = transform_acs_grad(k, t.sigma2, g.train); break;
            case Transform::Kind::ens: {
                std::vector<Kernel> parts;
                for (int m = 0; m < t.n_ens; ++m) parts.push_back(build_range(spec, i, ctx, m));
                k = transform_ensemble(parts);
                break;
            }
        }
    }
    return k;
}

}  // namespace

Kernel build_kernel(const KernelSpec& spec, const KernelContext& ctx) {
    if (!ctx.ground) throw ConfigError("kernel context has no ground set");
    int n_ens = 0;
    for (const auto& t : spec.transforms)
        if (t.kind == Transform::Kind::ens) ++n_ens;
    if (n_ens > 1) throw ConfigError("at most one ens(...) transform is supported");
    if (n_ens == 1 && spec.base != BaseKind::lin && static_cast<int>(ctx.models.size()) < spec.ensemble_size())
        throw ConfigError("ens(" + std::to_string(spec.ensemble_size()) + ") needs that many trained models");
    return build_range(spec, spec.transforms.size(), ctx, 0);
}

}  // namespace bmdal
