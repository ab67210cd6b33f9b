#include "bmdal/selection.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <unordered_map>

namespace bmdal {

Method parse_method(const std::string& name) {
    if (name == "random") return Method::random;
    if (name == "maxdiag") return Method::maxdiag;
    if (name == "maxdet") return Method::maxdet;
    if (name == "bait-f") return Method::bait_f;
    if (name == "bait-fb") return Method::bait_fb;
    if (name == "fw") return Method::fw;
    if (name == "maxdist") return Method::maxdist;
    if (name == "kmeanspp") return Method::kmeanspp;
    if (name == "lcmd") return Method::lcmd;
    throw ConfigError("unknown selection method '" + name + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::random: return "random";
        case Method::maxdiag: return "maxdiag";
        case Method::maxdet: return "maxdet";
        case Method::bait_f: return "bait-f";
        case Method::bait_fb: return "bait-fb";
        case Method::fw: return "fw";
        case Method::maxdist: return "maxdist";
        case Method::kmeanspp: return "kmeanspp";
        case Method::lcmd: return "lcmd";
    }
    return "?";
}

Mode parse_mode(const std::string& name) {
    if (name == "p" || name == "P") return Mode::P;
    if (name == "tp" || name == "TP") return Mode::TP;
    throw ConfigError("unknown selection mode '" + name + "'");
}

std::string to_string(Mode m) { return m == Mode::P ? "p" : "tp"; }

// ---------------------------------------------------------------------------
// MaxDet, kernel space

MaxDetKernelState::MaxDetKernelState(const Kernel& k, Indices cand, double sigma2, int capacity)
    : k_(&k), cand_(std::move(cand)), sigma2_(sigma2) {
    if (!(sigma2 >= 0)) throw ConfigError("sigma^2 must be non-negative");
    B_ = Mat::Zero(std::max(capacity, 0), cand_.size());
    c_ = k.diagonal(cand_).array() + sigma2;
}

void MaxDetKernelState::add(int x) {
    if (!(c_[x] > 0))
        throw NumericalError("maxdet: non-positive residual at added point; use sigma^2 > 0");
    if (rows_ == B_.rows()) B_.conservativeResize(B_.rows() * 2 + 1, Eigen::NoChange);
    Vec v = k_->column(cand_[x], cand_);
    v[x] += sigma2_;
    if (rows_ > 0) v -= B_.topRows(rows_).transpose() * B_.block(0, x, rows_, 1);
    v /= std::sqrt(c_[x]);
    B_.row(rows_++) = v.transpose();
    c_ -= v.cwiseProduct(v);
    c_[x] = 0.0;
}

// ---------------------------------------------------------------------------
// Posterior features (MaxDet feature space, BAIT)

PosteriorFeatureState::PosteriorFeatureState(Mat phi, double sigma2)
    : phi_(std::move(phi)), sigma2_(sigma2), sigma_(std::sqrt(sigma2)) {
    if (!(sigma2 > 0)) throw UnsupportedError("feature-space update requires sigma^2 > 0");
    c_ = phi_.rowwise().squaredNorm();
}

PosteriorFeatureState::PosteriorFeatureState(Mat phi, double sigma2, const Mat& tp_features)
    : PosteriorFeatureState(std::move(phi), sigma2) {
    if (tp_features.cols() != phi_.cols()) throw ConfigError("feature dimensions differ");
    bait_ = true;
    // tp^T tp = R^T R, so S = R^T.
    const Eigen::Index r = std::min(tp_features.rows(), tp_features.cols());
    Eigen::HouseholderQR<Mat> qr(tp_features);
    S_ = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    Q_ = phi_ * S_;
    v_ = Q_.rowwise().squaredNorm();
}

// Forward: phi <- phi M with M = I - beta p p^T and M^2 = I - p p^T / gamma^2.
void PosteriorFeatureState::add(int x) {
    const double gamma = std::sqrt(sigma2_ + c_[x]);
    const double beta = 1.0 / (gamma * (gamma + sigma_));
    const Vec px = phi_.row(x).transpose();
    const Vec u = phi_ * px;
    if (bait_) {
        const Vec q = Q_.row(x).transpose();
        Q_.noalias() -= (1.0 / (gamma * gamma)) * u * q.transpose();
        S_.noalias() -= beta * px * q.transpose();
        v_ = Q_.rowwise().squaredNorm();
    }
    phi_.noalias() -= beta * u * px.transpose();
    // Equal to c - u^2 / gamma^2; reading it off the square-root factor avoids
    // cancellation once c is of order sigma^2.
    c_ = phi_.rowwise().squaredNorm();
}

// Backward: M = I + beta~ p p^T with M^2 = I + p p^T / gamma~^2.
void PosteriorFeatureState::remove(int x) {
    const double rest = sigma2_ - c_[x];
    if (!(rest > 0)) throw NumericalError("backward update with sigma^2 - c[x] <= 0");
    const double gt = std::sqrt(rest);
    const double bt = 1.0 / (gt * (gt + sigma_));
    const Vec px = phi_.row(x).transpose();
    const Vec u = phi_ * px;
    if (bait_) {
        const Vec q = Q_.row(x).transpose();
        Q_.noalias() += (1.0 / rest) * u * q.transpose();
        S_.noalias() += bt * px * q.transpose();
        v_ = Q_.rowwise().squaredNorm();
    }
    phi_.noalias() += bt * u * px.transpose();
    c_ = phi_.rowwise().squaredNorm();
}

// ---------------------------------------------------------------------------
// Frank-Wolfe

FrankWolfeKernelState::FrankWolfeKernelState(const Kernel& k, const Indices& cand) {
    if (cand.size() > 4096)
        throw UnsupportedError("kernel-space frank-wolfe refuses more than 4096 candidates");
    K_ = k.gram(cand);
    c_ = K_.diagonal().cwiseMax(0.0).cwiseSqrt();
    r_ = c_.sum();
    u_ = K_.rowwise().sum();
    v_ = Vec::Zero(cand.size());
}

void FrankWolfeKernelState::add(int x) {
    if (!(c_[x] > 0)) return;
    const double ic = 1.0 / c_[x];
    const double gamma =
        (r_ * ic * (u_[x] - v_[x]) + s_ - t_) / (r_ * r_ - 2.0 * r_ * ic * v_[x] + s_);
    last_gamma_ = gamma;
    s_ = (1 - gamma) * (1 - gamma) * s_ + 2 * (1 - gamma) * gamma * r_ * ic * v_[x] +
         gamma * gamma * r_ * r_;
    t_ = (1 - gamma) * t_ + gamma * r_ * ic * u_[x];
    v_ = (1 - gamma) * v_ + gamma * r_ * ic * K_.col(x);
}

Vec FrankWolfeKernelState::scores() const {
    Vec s(c_.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        s[i] = c_[i] > 0 ? (u_[i] - v_[i]) / c_[i] : -kInf;
    return s;
}

FrankWolfeFeatureState::FrankWolfeFeatureState(const Mat& phi) {
    c_ = phi.rowwise().norm();
    r_ = c_.sum();
    phin_ = phi;
    for (Eigen::Index i = 0; i < phin_.rows(); ++i)
        if (c_[i] > 0) phin_.row(i) /= c_[i];
    u_ = phi.colwise().sum().transpose();
    v_ = Vec::Zero(phi.cols());
}

void FrankWolfeFeatureState::add(int x) {
    if (!(c_[x] > 0)) return;
    const Vec a = r_ * phin_.row(x).transpose() - v_;
    const double gamma = a.dot(u_ - v_) / a.squaredNorm();
    last_gamma_ = gamma;
    v_ = (1 - gamma) * v_ + gamma * r_ * phin_.row(x).transpose();
}

Vec FrankWolfeFeatureState::scores() const {
    Vec s = phin_ * (u_ - v_);
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!(c_[i] > 0)) s[i] = -kInf;
    return s;
}

// ---------------------------------------------------------------------------
// Distances

DistanceState::DistanceState(const Kernel& k, Indices cand) : k_(&k), cand_(std::move(cand)) {
    c_ = k.diagonal(cand_);
    d_ = Vec::Constant(cand_.size(), kInf);
    center_.assign(cand_.size(), -1);
}

void DistanceState::add(int x) {
    const Vec kx = k_->column(cand_[x], cand_);
    for (Eigen::Index i = 0; i < d_.size(); ++i) {
        const double dist = std::max(c_[x] + c_[i] - 2.0 * kx[i], 0.0);
        if (dist < d_[i]) {
            d_[i] = dist;
            center_[i] = x;
        }
    }
    d_[x] = 0.0;
    center_[x] = x;
    ++added_;
}

// ---------------------------------------------------------------------------
// Selection template

namespace {

struct Choice {
    int index = -1;
    double score = std::numeric_limits<double>::quiet_NaN();
};

// remaining[i]: candidate i is a pool point not yet in the batch.
class Selector {
public:
    virtual ~Selector() = default;
    virtual void add(int x) = 0;
    virtual Choice next(const std::vector<bool>& remaining) = 0;
    virtual void remove(int) { throw UnsupportedError("method has no backward step"); }
    virtual Choice next_backward(const std::vector<bool>&) {
        throw UnsupportedError("method has no backward step");
    }
};

Choice pick(const Vec& score, const std::vector<bool>& mask) {
    Choice c;
    c.index = argmax_masked(score, mask);
    if (c.index >= 0) c.score = score[c.index];
    return c;
}

class RandomSelector : public Selector {
public:
    RandomSelector(const std::vector<bool>& is_pool, std::uint64_t seed) {
        for (std::size_t i = 0; i < is_pool.size(); ++i)
            if (is_pool[i]) order_.push_back(static_cast<int>(i));
        std::mt19937_64 rng(seed);
        std::shuffle(order_.begin(), order_.end(), rng);
    }
    void add(int) override {}
    Choice next(const std::vector<bool>& remaining) override {
        while (pos_ < order_.size() && !remaining[order_[pos_]]) ++pos_;
        if (pos_ == order_.size()) return {};
        return {order_[pos_], 0.0};
    }

private:
    Indices order_;
    std::size_t pos_ = 0;
};

class MaxDiagSelector : public Selector {
public:
    MaxDiagSelector(const Kernel& k, const Indices& cand, const std::vector<bool>& is_pool)
        : diag_(k.diagonal(cand)) {
        for (std::size_t i = 0; i < is_pool.size(); ++i)
            if (is_pool[i]) order_.push_back(static_cast<int>(i));
        std::stable_sort(order_.begin(), order_.end(),
                         [&](int a, int b) { return diag_[a] > diag_[b]; });
    }
    void add(int) override {}
    Choice next(const std::vector<bool>& remaining) override {
        while (pos_ < order_.size() && !remaining[order_[pos_]]) ++pos_;
        if (pos_ == order_.size()) return {};
        return {order_[pos_], diag_[order_[pos_]]};
    }

private:
    Vec diag_;
    Indices order_;
    std::size_t pos_ = 0;
};

class MaxDetKernelSelector : public Selector {
public:
    MaxDetKernelSelector(const Kernel& k, const Indices& cand, double sigma2, int capacity)
        : st_(k, cand, sigma2, capacity) {}
    void add(int x) override { st_.add(x); }
    Choice next(const std::vector<bool>& remaining) override {
        Choice c = pick(st_.residual(), remaining);
        if (c.index >= 0 && !(c.score > 0)) return {};
        return c;
    }

private:
    MaxDetKernelState st_;
};

class MaxDetFeatureSelector : public Selector {
public:
    MaxDetFeatureSelector(Mat phi, double sigma2) : st_(std::move(phi), sigma2) {}
    void add(int x) override { st_.add(x); }
    Choice next(const std::vector<bool>& remaining) override { return pick(st_.c(), remaining); }

private:
    PosteriorFeatureState st_;
};

class BaitSelector : public Selector {
public:
    BaitSelector(Mat phi, double sigma2, const Mat& tp) : st_(std::move(phi), sigma2, tp) {}
    void add(int x) override { st_.add(x); }
    void remove(int x) override { st_.remove(x); }
    Choice next(const std::vector<bool>& remaining) override {
        const Vec score = st_.v().array() / (st_.sigma2() + st_.c().array());
        return pick(score, remaining);
    }
    Choice next_backward(const std::vector<bool>& in_batch) override {
        const Vec denom = st_.sigma2() - st_.c().array();
        const Vec score = st_.v().array() / denom.array();
        Choice best;
        for (std::size_t i = 0; i < in_batch.size(); ++i) {
            if (!in_batch[i]) continue;
            if (best.index < 0 || score[i] < best.score) best = {static_cast<int>(i), score[i]};
        }
        if (best.index < 0 || !(denom[best.index] > 1e-12)) return {};
        return best;
    }

private:
    PosteriorFeatureState st_;
};

template <class State>
class FrankWolfeSelector : public Selector {
public:
    template <class... Args>
    explicit FrankWolfeSelector(Args&&... args) : st_(std::forward<Args>(args)...) {}
    void add(int x) override { st_.add(x); }
    Choice next(const std::vector<bool>& remaining) override {
        Choice c = pick(st_.scores(), remaining);
        if (c.index >= 0 && c.score == -kInf) return {};
        return c;
    }

private:
    State st_;
};

class DistanceSelector : public Selector {
public:
    enum class Rule { maxdist, kmeanspp, lcmd };

    DistanceSelector(const Kernel& k, const Indices& cand, Rule rule, std::uint64_t seed)
        : st_(k, cand), rule_(rule), rng_(seed) {}

    void add(int x) override { st_.add(x); }

    Choice next(const std::vector<bool>& remaining) override {
        switch (rule_) {
            case Rule::maxdist: return next_maxdist(remaining);
            case Rule::kmeanspp: return next_kmeanspp(remaining);
            case Rule::lcmd: return next_lcmd(remaining);
        }
        return {};
    }

private:
    DistanceState st_;
    Rule rule_;
    std::mt19937_64 rng_;

    Choice next_maxdist(const std::vector<bool>& remaining) {
        if (st_.added() == 0) return pick(st_.diag(), remaining);
        Choice c = pick(st_.d(), remaining);
        if (c.index >= 0 && !(c.score > 0)) return {};
        return c;
    }

    Choice next_kmeanspp(const std::vector<bool>& remaining) {
        Indices rem;
        for (std::size_t i = 0; i < remaining.size(); ++i)
            if (remaining[i]) rem.push_back(static_cast<int>(i));
        if (rem.empty()) return {};
        if (st_.added() == 0) {
            std::uniform_int_distribution<std::size_t> u(0, rem.size() - 1);
            return {rem[u(rng_)], 0.0};
        }
        std::vector<double> cdf(rem.size());
        double total = 0.0;
        for (std::size_t j = 0; j < rem.size(); ++j) {
            const double w = st_.d()[rem[j]];
            total += w < 1e-30 ? 0.0 : w;
            cdf[j] = total;
        }
        if (!(total > 0) || !std::isfinite(total)) return {};
        const double u = std::uniform_real_distribution<double>(0.0, total)(rng_);
        std::size_t j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (j >= rem.size()) j = rem.size() - 1;
        while (j > 0 && cdf[j] == cdf[j - 1]) --j;  // never land on a zero-mass point
        return {rem[j], st_.d()[rem[j]]};
    }

    Choice next_lcmd(const std::vector<bool>& remaining) {
        if (st_.added() == 0) return pick(st_.diag(), remaining);
        const auto& center = st_.centers();
        const Vec& d = st_.d();
        std::unordered_map<int, double> size;
        for (std::size_t i = 0; i < remaining.size(); ++i)
            if (remaining[i]) size[center[i]] += d[i];
        double smax = -kInf;
        for (const auto& [c, s] : size) smax = std::max(smax, s);
        std::vector<bool> mask(remaining.size(), false);
        for (std::size_t i = 0; i < remaining.size(); ++i)
            mask[i] = remaining[i] && size[center[i]] == smax;
        Choice c = pick(d, mask);
        if (c.index >= 0 && !(c.score > 0)) return {};
        return c;
    }
};

bool can_materialize(const Kernel& k, std::size_t rows) {
    return !k.has_evaluators() && k.feature_dim() * static_cast<double>(rows) <= kMaterializeCap;
}

Mat require_features(const Kernel& k, const Indices& rows, const char* method) {
    if (k.has_evaluators())
        throw UnsupportedError(std::string(method) +
                               " requires a feature-backed kernel; apply rp(p) to obtain one");
    return k.features(rows);
}

}  // namespace

SelectionResult select(const SelectionRequest& req) {
    if (req.kernel == nullptr) throw ConfigError("selection request without kernel");
    const Kernel& k = *req.kernel;
    const int n_pool = static_cast<int>(req.pool.size());
    if (req.n_batch < 0 || req.n_batch > n_pool)
        throw ConfigError("batch size must lie in [0, |pool|]");
    if (!(req.sigma2 >= 0)) throw ConfigError("sigma^2 must be non-negative");
    {
        std::vector<char> seen(k.size(), 0);
        for (int i : concat(req.train, req.pool)) {
            if (i < 0 || i >= k.size()) throw ConfigError("index outside the kernel's ground set");
            if (seen[i]) throw ConfigError("train and pool indices must be distinct");
            seen[i] = 1;
        }
    }

    SelectionResult res;
    if (req.n_batch == 0) return res;

    int n_extra = 0;
    if (req.method == Method::bait_fb) {
        n_extra = req.n_extra < 0 ? std::min(req.n_batch, n_pool - req.n_batch) : req.n_extra;
        if (req.n_batch + n_extra > n_pool)
            throw ConfigError("n_batch + n_extra exceeds the pool size");
    }

    const bool tp = req.mode == Mode::TP;
    const int m0 = tp ? static_cast<int>(req.train.size()) : 0;
    const Indices cand = tp ? concat(req.train, req.pool) : req.pool;
    const int m = static_cast<int>(cand.size());
    std::vector<bool> is_pool(m, false);
    for (int i = m0; i < m; ++i) is_pool[i] = true;

    std::unique_ptr<Selector> sel;
    switch (req.method) {
        case Method::random:
            sel = std::make_unique<RandomSelector>(is_pool, req.rng_seed);
            break;
        case Method::maxdiag:
            sel = std::make_unique<MaxDiagSelector>(k, cand, is_pool);
            break;
        case Method::maxdet: {
            SpaceImpl impl = req.impl;
            if (impl == SpaceImpl::automatic) {
                const double n_sel = m0 + req.n_batch;
                impl = (req.sigma2 > 0 && can_materialize(k, m) && n_sel > 3.0 * k.feature_dim())
                           ? SpaceImpl::feature
                           : SpaceImpl::kernel;
            }
            if (impl == SpaceImpl::kernel)
                sel = std::make_unique<MaxDetKernelSelector>(k, cand, req.sigma2, m0 + req.n_batch);
            else
                sel = std::make_unique<MaxDetFeatureSelector>(require_features(k, cand, "maxdet"),
                                                              req.sigma2);
            break;
        }
        case Method::bait_f:
        case Method::bait_fb: {
            Mat phi = require_features(k, cand, "bait");
            if (static_cast<double>(phi.cols()) * static_cast<double>(phi.cols()) > kMaterializeCap)
                throw UnsupportedError("bait: feature dimension too large for the second-moment matrix");
            const Mat tp_feat = tp ? phi : k.features(concat(req.train, req.pool));
            sel = std::make_unique<BaitSelector>(std::move(phi), req.sigma2, tp_feat);
            break;
        }
        case Method::fw:
            if (req.impl == SpaceImpl::kernel)
                sel = std::make_unique<FrankWolfeSelector<FrankWolfeKernelState>>(k, cand);
            else
                sel = std::make_unique<FrankWolfeSelector<FrankWolfeFeatureState>>(
                    require_features(k, cand, "fw"));
            break;
        case Method::maxdist:
            sel = std::make_unique<DistanceSelector>(k, cand, DistanceSelector::Rule::maxdist, req.rng_seed);
            break;
        case Method::kmeanspp:
            sel = std::make_unique<DistanceSelector>(k, cand, DistanceSelector::Rule::kmeanspp, req.rng_seed);
            break;
        case Method::lcmd:
            sel = std::make_unique<DistanceSelector>(k, cand, DistanceSelector::Rule::lcmd, req.rng_seed);
            break;
    }

    for (int x = 0; x < m0; ++x) sel->add(x);

    std::vector<bool> remaining = is_pool;
    std::vector<bool> in_batch(m, false);
    Indices local;
    bool failed = false;
    const int n_forward = req.n_batch + n_extra;
    for (int step = 0; step < n_forward; ++step) {
        Choice c = sel->next(remaining);
        if (c.index < 0 || c.index >= m || !remaining[c.index] || !std::isfinite(c.score)) {
            failed = true;
            break;
        }
        local.push_back(c.index);
        remaining[c.index] = false;
        in_batch[c.index] = true;
        res.scores.push_back(c.score);
        sel->add(c.index);
    }

    if (!failed) {
        for (int step = 0; step < n_extra; ++step) {
            Choice c = sel->next_backward(in_batch);
            if (c.index < 0) break;
            sel->remove(c.index);
            in_batch[c.index] = false;
            local.erase(std::find(local.begin(), local.end(), c.index));
        }
    }
    // Forward overshoot or an early stop of the backward phase: drop the most
    // recently added points.
    if (static_cast<int>(local.size()) > req.n_batch) local.resize(req.n_batch);

    if (static_cast<int>(local.size()) < req.n_batch) {
        Indices rest;
        for (int i = m0; i < m; ++i)
            if (std::find(local.begin(), local.end(), i) == local.end()) rest.push_back(i);
        std::mt19937_64 rng(derive_seed(req.rng_seed, "fill"));
        std::shuffle(rest.begin(), rest.end(), rng);
        const int need = req.n_batch - static_cast<int>(local.size());
        local.insert(local.end(), rest.begin(), rest.begin() + need);
        res.status = SelectionStatus::random_filled;
        res.random_filled = need;
    }

    res.batch.reserve(local.size());
    for (int x : local) res.batch.push_back(cand[x]);
    return res;
}

}  // namespace bmdal
