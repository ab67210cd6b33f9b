#pragma once

#include "bmdal/common.hpp"
#include "bmdal/kernels.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bmdal {

enum class Method { random, maxdiag, maxdet, bait_f, bait_fb, fw, maxdist, kmeanspp, lcmd };
enum class Mode { P, TP };
enum class SpaceImpl { automatic, kernel, feature };

Method parse_method(const std::string& name);
std::string to_string(Method m);
Mode parse_mode(const std::string& name);
std::string to_string(Mode m);

struct SelectionRequest {
    Method method = Method::random;
    Mode mode = Mode::P;
    const Kernel* kernel = nullptr;
    Indices train;  // indices into the kernel's ground set
    Indices pool;
    int n_batch = 0;
    double sigma2 = 1e-6;  // maxdet, bait
    int n_extra = -1;      // bait-fb; negative selects min(n_batch, n_pool - n_batch)
    std::uint64_t rng_seed = 0;
    SpaceImpl impl = SpaceImpl::automatic;  // maxdet and fw
};

enum class SelectionStatus { ok, random_filled };

struct SelectionResult {
    Indices batch;  // ground-set indices in selection order
    SelectionStatus status = SelectionStatus::ok;
    int random_filled = 0;
    std::vector<double> scores;  // score of each accepted forward pick
};

SelectionResult select(const SelectionRequest& req);

// Incremental states. Indices are positions in the candidate list the state
// was built on.

// Partial pivoted Cholesky of k(cand, cand) + sigma^2 I.
class MaxDetKernelState {
public:
    MaxDetKernelState(const Kernel& k, Indices cand, double sigma2, int capacity);
    void add(int x);
    const Vec& residual() const { return c_; }
    int added() const { return rows_; }

private:
    const Kernel* k_;
    Indices cand_;
    double sigma2_;
    Mat B_;
    Vec c_;
    int rows_ = 0;
};

// Posterior feature map under rank-one square-root updates. When
// second-moment features are supplied, also tracks v for BAIT through a
// square root S of Sigma and Q = phi S, so that v is a row norm of Q.
class PosteriorFeatureState {
public:
    PosteriorFeatureState(Mat phi, double sigma2);
    PosteriorFeatureState(Mat phi, double sigma2, const Mat& tp_features);

    void add(int x);
    void remove(int x);

    const Mat& phi() const { return phi_; }
    const Vec& c() const { return c_; }
    const Vec& v() const { return v_; }
    Mat sigma_matrix() const { return S_ * S_.transpose(); }
    double sigma2() const { return sigma2_; }
    bool tracks_bait() const { return bait_; }

private:
    Mat phi_;
    Vec c_;
    Mat S_;
    Mat Q_;
    Vec v_;
    double sigma2_;
    double sigma_;
    bool bait_ = false;
};

class FrankWolfeKernelState {
public:
    FrankWolfeKernelState(const Kernel& k, const Indices& cand);
    void add(int x);
    Vec scores() const;  // c^{-1} (u - v); -inf where c == 0
    double last_gamma() const { return last_gamma_; }

private:
    Mat K_;
    Vec c_, u_, v_;
    double r_ = 0.0, s_ = 0.0, t_ = 0.0;
    double last_gamma_ = 0.0;
};

class FrankWolfeFeatureState {
public:
    explicit FrankWolfeFeatureState(const Mat& phi);
    void add(int x);
    Vec scores() const;  // <phi~[x], u - v>; -inf where the row has zero norm
    const Vec& approximation() const { return v_; }
    double last_gamma() const { return last_gamma_; }

private:
    Mat phin_;
    Vec c_, u_, v_;
    double r_ = 0.0;
    double last_gamma_ = 0.0;
};

// Minimum squared kernel distances to the added points and the nearest added
// point (center) for each candidate.
class DistanceState {
public:
    DistanceState(const Kernel& k, Indices cand);
    void add(int x);
    const Vec& d() const { return d_; }
    const Vec& diag() const { return c_; }
    const std::vector<int>& centers() const { return center_; }
    int added() const { return added_; }

private:
    const Kernel* k_;
    Indices cand_;
    Vec c_, d_;
    std::vector<int> center_;
    int added_ = 0;
};

}  // namespace bmdal
