#pragma once

#include "bmdal/common.hpp"
#include "bmdal/model.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace bmdal {

// Points indexed 0..n-1; train and pool tag disjoint subsets. Duplicate rows
// are distinct points.
struct GroundSet {
    Mat X;
    Indices train;
    Indices pool;

    int size() const { return static_cast<int>(X.rows()); }
};

// Lazy pairwise kernel for infinite-dimensional or factorized-posterior cases.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual double eval(int i, int j) const = 0;
    virtual Vec column(int j, const Indices& rows) const;
};

// weight * prod_f <F_f[i], F_f[j]>
struct ProductTerm {
    double weight = 1.0;
    std::vector<Mat> factors;
};

// A kernel is a sum of product terms over feature factors plus a sum of lazy
// evaluators. A single term with a single factor is a plain feature map.
class Kernel {
public:
    Kernel() = default;
    static Kernel from_features(Mat F);
    static Kernel from_terms(int n, std::vector<ProductTerm> terms);
    static Kernel from_evaluator(int n, std::shared_ptr<const Evaluator> eval);

    int size() const { return n_; }
    double operator()(int i, int j) const;
    double diag(int i) const { return (*this)(i, i); }
    Vec diagonal(const Indices& rows) const;
    Vec column(int j, const Indices& rows) const;
    Mat gram(const Indices& rows) const;
    Mat gram(const Indices& rows, const Indices& cols) const;

    bool has_evaluators() const { return !evals_.empty(); }
    bool is_plain() const;
    // Dimension of an explicit feature map; +inf when evaluator-backed.
    double feature_dim() const;
    // Materializes an explicit feature map (Kronecker rows for products,
    // concatenation for sums). Throws UnsupportedError when evaluator-backed
    // or above the materialization cap.
    Mat features(const Indices& rows) const;
    Mat features() const;

    Kernel scaled(double factor) const;
    Kernel plus(const Kernel& other) const;

    const std::vector<ProductTerm>& terms() const { return terms_; }
    const std::vector<std::shared_ptr<const Evaluator>>& evaluators() const { return evals_; }

private:
    int n_ = 0;
    std::vector<ProductTerm> terms_;
    std::vector<std::shared_ptr<const Evaluator>> evals_;
    std::vector<double> eval_weights_;
};

inline constexpr double kMaterializeCap = 2e8;

// Kernel specification text: base ("->" transform)*
enum class BaseKind { lin, ll, grad, nngp };

struct Transform {
    enum class Kind { scale, post, rp, ens, acs_rf, acs_grad };
    Kind kind = Kind::scale;
    double sigma2 = 0.0;
    int p = 0;
    int n_ens = 0;

    bool operator==(const Transform&) const = default;
};

struct KernelSpec {
    BaseKind base = BaseKind::lin;
    std::vector<Transform> transforms;

    std::string to_string() const;
    int ensemble_size() const;
    bool operator==(const KernelSpec&) const = default;
};

KernelSpec parse_kernel_spec(std::string_view text);

// Base kernels.
Kernel base_linear(const GroundSet& ground);
Kernel base_last_layer(const TrainedModel& model, const GroundSet& ground,
                       Precision precision = Precision::f32);
Kernel base_grad(const TrainedModel& model, const GroundSet& ground,
                 Precision precision = Precision::f32);
Kernel base_nngp(const ModelConfig& config, const GroundSet& ground);

// Transformations.
Kernel transform_scale(const Kernel& k, const Indices& train);
Kernel transform_posterior(const Kernel& k, const Indices& obs, double sigma2);
using SketchDraw = std::function<Mat(int p, int d, std::uint64_t seed)>;
Kernel transform_rp(const Kernel& k, int p, std::uint64_t seed, const SketchDraw& draw = {});
Kernel transform_ensemble(const std::vector<Kernel>& kernels);
Kernel transform_acs_rf(const Kernel& k, int p, double sigma2, const Indices& train,
                        const Vec& train_labels, const Vec& train_predictions, std::uint64_t seed);
Kernel transform_acs_grad(const Kernel& k, double sigma2, const Indices& train);

// Exposed for tests: true when the posterior transform uses the feature path.
bool posterior_uses_features(const Kernel& k, const Indices& obs);

double effective_dim(const Kernel& k, const Indices& pool);

struct KernelContext {
    const GroundSet* ground = nullptr;
    std::vector<const TrainedModel*> models;  // ensemble members; [0] used by default
    Vec train_labels;                         // aligned with ground->train
    Vec train_predictions;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
};

Kernel build_kernel(const KernelSpec& spec, const KernelContext& ctx);

}  // namespace bmdal
