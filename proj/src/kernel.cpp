#include "bmdal/kernels.hpp"

#include <cmath>

namespace bmdal {

Vec Evaluator::column(int j, const Indices& rows) const {
    Vec out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = eval(rows[r], j);
    return out;
}

Kernel Kernel::from_features(Mat F) {
    Kernel k;
    k.n_ = static_cast<int>(F.rows());
    ProductTerm t;
    t.factors.push_back(std::move(F));
    k.terms_.push_back(std::move(t));
    return k;
}

Kernel Kernel::from_terms(int n, std::vector<ProductTerm> terms) {
    for (const auto& t : terms) {
        if (t.factors.empty()) throw ConfigError("product term without factors");
        if (!(t.weight >= 0)) throw ConfigError("product term weight must be non-negative");
        for (const auto& f : t.factors)
            if (f.rows() != n) throw ConfigError("factor row count does not match ground set");
    }
    Kernel k;
    k.n_ = n;
    k.terms_ = std::move(terms);
    return k;
}

Kernel Kernel::from_evaluator(int n, std::shared_ptr<const Evaluator> eval) {
    Kernel k;
    k.n_ = n;
    k.evals_.push_back(std::move(eval));
    k.eval_weights_.push_back(1.0);
    return k;
}

double Kernel::operator()(int i, int j) const {
    double s = 0.0;
    for (const auto& t : terms_) {
        double p = t.weight;
        for (const auto& f : t.factors) p *= f.row(i).dot(f.row(j));
        s += p;
    }
    for (std::size_t e = 0; e < evals_.size(); ++e) s += eval_weights_[e] * evals_[e]->eval(i, j);
    return s;
}

Vec Kernel::diagonal(const Indices& rows) const {
    Vec d = Vec::Zero(rows.size());
    for (const auto& t : terms_) {
        Vec p = Vec::Constant(rows.size(), t.weight);
        for (const auto& f : t.factors)
            for (std::size_t r = 0; r < rows.size(); ++r) p[r] *= f.row(rows[r]).squaredNorm();
        d += p;
    }
    for (std::size_t e = 0; e < evals_.size(); ++e)
        for (std::size_t r = 0; r < rows.size(); ++r)
            d[r] += eval_weights_[e] * evals_[e]->eval(rows[r], rows[r]);
    return d;
}

Vec Kernel::column(int j, const Indices& rows) const {
    Vec out = Vec::Zero(rows.size());
    for (const auto& t : terms_) {
        Vec p = Vec::Constant(rows.size(), t.weight);
        for (const auto& f : t.factors) {
            Vec fj = f.row(j).transpose();
            p.array() *= (f(rows, Eigen::all) * fj).array();
        }
        out += p;
    }
    for (std::size_t e = 0; e < evals_.size(); ++e)
        out += eval_weights_[e] * evals_[e]->column(j, rows);
    return out;
}

Mat Kernel::gram(const Indices& rows) const { return gram(rows, rows); }

Mat Kernel::gram(const Indices& rows, const Indices& cols) const {
    Mat G = Mat::Zero(rows.size(), cols.size());
    for (const auto& t : terms_) {
        Mat p = Mat::Constant(rows.size(), cols.size(), t.weight);
        for (const auto& f : t.factors) {
            Mat a = f(rows, Eigen::all);
            Mat b = f(cols, Eigen::all);
            p.array() *= (a * b.transpose()).array();
        }
        G += p;
    }
    if (!evals_.empty())
        for (std::size_t c = 0; c < cols.size(); ++c) {
            for (std::size_t e = 0; e < evals_.size(); ++e)
                G.col(c) += eval_weights_[e] * evals_[e]->column(cols[c], rows);
        }
    return G;
}

bool Kernel::is_plain() const {
    return evals_.empty() && terms_.size() == 1 && terms_[0].factors.size() == 1;
}

double Kernel::feature_dim() const {
    if (!evals_.empty()) return kInf;
    double d = 0.0;
    for (const auto& t : terms_) {
        double p = 1.0;
        for (const auto& f : t.factors) p *= static_cast<double>(f.cols());
        d += p;
    }
    return d;
}

Mat Kernel::features(const Indices& rows) const {
    if (!evals_.empty())
        throw UnsupportedError("kernel has no explicit feature map (evaluator-backed)");
    const double dim = feature_dim();
    if (dim * static_cast<double>(rows.size()) > kMaterializeCap)
        throw UnsupportedError("feature matrix of " + std::to_string(rows.size()) + " x " +
                               std::to_string(static_cast<long long>(dim)) +
                               " exceeds the materialization cap");
    Mat F(rows.size(), static_cast<Eigen::Index>(dim));
    Eigen::Index col = 0;
    for (const auto& t : terms_) {
        const double sw = std::sqrt(t.weight);
        Mat block = sw * t.factors[0](rows, Eigen::all);
        for (std::size_t fi = 1; fi < t.factors.size(); ++fi) {
            Mat f = t.factors[fi](rows, Eigen::all);
            Mat kron(block.rows(), block.cols() * f.cols());
            for (Eigen::Index a = 0; a < block.cols(); ++a)
                kron.middleCols(a * f.cols(), f.cols()) = f.array().colwise() * block.col(a).array();
            block = std::move(kron);
        }
        F.middleCols(col, block.cols()) = block;
        col += block.cols();
    }
    return F;
}

Mat Kernel::features() const { return features(iota_indices(0, n_)); }

Kernel Kernel::scaled(double factor) const {
    if (!(factor >= 0)) throw ConfigError("kernel scale factor must be non-negative");
    Kernel k = *this;
    for (auto& t : k.terms_) t.weight *= factor;
    for (auto& w : k.eval_weights_) w *= factor;
    return k;
}

Kernel Kernel::plus(const Kernel& other) const {
    if (n_ != other.n_) throw ConfigError("kernels are defined on different ground sets");
    Kernel k = *this;
    k.terms_.insert(k.terms_.end(), other.terms_.begin(), other.terms_.end());
    k.evals_.insert(k.evals_.end(), other.evals_.begin(), other.evals_.end());
    k.eval_weights_.insert(k.eval_weights_.end(), other.eval_weights_.begin(),
                           other.eval_weights_.end());
    return k;
}

}  // namespace bmdal
