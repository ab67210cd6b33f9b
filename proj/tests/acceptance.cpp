// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include "bmdal/bench.hpp"
#include "bmdal/kernels.hpp"
#include "bmdal/oracles.hpp"
#include "bmdal/selection.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace bmdal;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Mat random_matrix(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double max_rel(const Mat& a, const Mat& ref) {
    const double s = ref.cwiseAbs().maxCoeff();
    return (a - ref).cwiseAbs().maxCoeff() / (s > 0 ? s : 1.0);
}

std::string fmt(const char* f, double a, double b = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

class GramEvaluator final : public Evaluator {
public:
    explicit GramEvaluator(Mat g) : g_(std::move(g)) {}
    double eval(int i, int j) const override { return g_(i, j); }

private:
    Mat g_;
};

SelectionResult run_select(Method method, Mode mode, const Kernel& k, Indices train, Indices pool, int n_batch,
                           double sigma2, std::uint64_t seed = 0, SpaceImpl impl = SpaceImpl::automatic) {
    SelectionRequest r;
    r.method = method;
    r.mode = mode;
    r.kernel = &k;
    r.train = std::move(train);
    r.pool = std::move(pool);
    r.n_batch = n_batch;
    r.sigma2 = sigma2;
    r.rng_seed = seed;
    r.impl = impl;
    return select(r);
}

// Smallest top-two gap of the greedy posterior-variance score along the
// greedy path, using the naive posterior.
double maxdet_gap(const Mat& G, double sigma2, const Indices& mode, const Indices& pool, int n_batch) {
    Indices sel = mode;
    double gap = kInf;
    for (int s = 0; s < n_batch; ++s) {
        double best = -kInf, second = -kInf;
        int arg = -1;
        for (int x : pool) {
            if (std::find(sel.begin(), sel.end(), x) != sel.end()) continue;
            const double v = oracle::naive_posterior(G, sel, sigma2, x, x);
            if (v > best) {
                second = best;
                best = v;
                arg = x;
            } else if (v > second) {
                second = v;
            }
        }
        if (second > -kInf) gap = std::min(gap, best - second);
        sel.push_back(arg);
    }
    return gap;
}

ModelConfig random_net(std::mt19937_64& rng, Activation act) {
    const int L = uniform_int(rng, 1, 3);
    std::vector<int> widths{uniform_int(rng, 1, 8)};
    for (int l = 1; l < L; ++l) widths.push_back(uniform_int(rng, 1, 16));
    widths.push_back(1);
    ModelConfig c;
    c.widths = widths;
    c.activation = act;
    c.sigma_w = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
    c.sigma_b = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    c.init_seed = rng();
    return c;
}

ModelParams with_random_biases(const ModelConfig& c, std::mt19937_64& rng) {
    ModelParams p = init_network(c);
    for (auto& b : p.b) b = random_matrix(static_cast<int>(b.size()), 1, rng);
    return p;
}

GroundSet ground_of(const Mat& X) {
    GroundSet g;
    g.X = X;
    g.pool = iota_indices(0, static_cast<int>(X.rows()));
    return g;
}

// ---------------------------------------------------------------------------

Outcome ntk_identity() {
    std::mt19937_64 rng(101);
    double worst = 0;
    for (int net = 0; net < 24; ++net) {
        ModelConfig c = random_net(rng, net % 2 ? Activation::silu : Activation::relu);
        TrainedModel m{c, with_random_biases(c, rng), {}, 0};
        Mat X = random_matrix(uniform_int(rng, 2, 12), c.widths[0], rng);
        Mat fact = base_grad(m, ground_of(X), Precision::f64).gram(iota_indices(0, static_cast<int>(X.rows())));
        worst = std::max(worst, max_rel(fact, oracle::explicit_ntk(m.params, c, X)));
    }
    return {worst < 1e-10, fmt("24 nets, max rel err %.3g", worst)};
}

Outcome gradient_fd() {
    std::mt19937_64 rng(202);
    double worst = 0;
    for (int net = 0; net < 20; ++net) {
        ModelConfig c = random_net(rng, net % 2 ? Activation::silu : Activation::relu);
        ModelParams p = with_random_biases(c, rng);
        Mat X = random_matrix(6, c.widths[0], rng);
        GradFactors g = extract_grad_factors(p, c, X, Precision::f64);
        Mat fd = oracle::finite_difference_jacobian(p, c, X, 1e-6);
        Mat rec(X.rows(), fd.cols());
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            Eigen::Index col = 0;
            for (std::size_t l = 0; l < g.in.size(); ++l) {
                const Eigen::Index din = g.in[l].cols() - 1, dout = g.out[l].cols();
                for (Eigen::Index i = 0; i < dout; ++i)
                    for (Eigen::Index k = 0; k < din; ++k) rec(n, col++) = g.out[l](n, i) * g.in[l](n, k);
                for (Eigen::Index i = 0; i < dout; ++i) rec(n, col++) = g.out[l](n, i) * g.in[l](n, din);
            }
        }
        worst = std::max(worst, max_rel(rec, fd));
    }
    return {worst < 1e-5, fmt("20 nets, max rel err %.3g", worst)};
}

Outcome nngp_convergence() {
    std::mt19937_64 rng(303);
    const int d = 4;
    ModelConfig c = ModelConfig::standard(d, {2048}, Activation::relu, 0);
    Mat X = random_matrix(10, d, rng);
    Mat analytic = base_nngp(c, ground_of(X)).gram(iota_indices(0, 10));
    Mat mc = oracle::mc_nngp(c, X, 2000, 304);
    double worst = 0;
    for (int pair = 0; pair < 5; ++pair) {
        const int a = 2 * pair, b = 2 * pair + 1;
        worst = std::max(worst, std::abs(mc(a, b) - analytic(a, b)) / std::abs(analytic(a, b)));
    }
    return {worst < 0.05, fmt("5 pairs, width 2048, 2000 samples, max rel err %.3g", worst)};
}

Outcome posterior_dual_path() {
    std::mt19937_64 rng(404);
    double worst = 0;
    const double s2s[] = {1e-6, 1e-3, 1.0};
    for (int inst = 0; inst < 100; ++inst) {
        const int n = uniform_int(rng, 2, 32), d = uniform_int(rng, 1, 8);
        Mat F = random_matrix(n, d, rng);
        Indices obs = iota_indices(0, uniform_int(rng, 1, n - 1));
        const double s2 = s2s[inst % 3];
        Kernel kf = transform_posterior(Kernel::from_features(F), obs, s2);
        Kernel ke = transform_posterior(
            Kernel::from_evaluator(n, std::make_shared<GramEvaluator>(F * F.transpose())), obs, s2);
        if (kf.has_evaluators() || !ke.has_evaluators()) return {false, "path selection mismatch"};
        const Indices all = iota_indices(0, n);
        worst = std::max(worst, max_rel(kf.gram(all), ke.gram(all)));
    }
    return {worst < 1e-8, fmt("100 instances, max rel err %.3g", worst)};
}

Outcome posterior_composition() {
    std::mt19937_64 rng(505);
    double worst = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const int n = uniform_int(rng, 4, 32), d = uniform_int(rng, 1, 8);
        Mat F = random_matrix(n, d, rng);
        const double s2 = std::array{1e-3, 1e-1, 1.0}[inst % 3];
        const int na = uniform_int(rng, 1, n / 2), nb = uniform_int(rng, 1, n / 2);
        Indices a = iota_indices(0, na), b = iota_indices(na, na + nb);
        Kernel k = Kernel::from_features(F);
        Kernel seq = transform_posterior(transform_posterior(k, a, s2), b, s2);
        Kernel joint = transform_posterior(k, concat(a, b), s2);
        const Indices all = iota_indices(0, n);
        worst = std::max(worst, max_rel(seq.gram(all), joint.gram(all)));
    }
    return {worst < 1e-8, fmt("100 instances, max rel err %.3g", worst)};
}

Outcome maxdet_triple() {
    std::mt19937_64 rng(606);
    int checked = 0, agree = 0, tries = 0;
    while (checked < 50 && tries < 1000) {
        ++tries;
        const int n = uniform_int(rng, 6, 40), d = uniform_int(rng, 1, 8);
        Mat F = random_matrix(n, d, rng);
        Mat G = F * F.transpose();
        const int nb = uniform_int(rng, 1, std::min(n, 8));
        const Indices pool = iota_indices(0, n);
        if (maxdet_gap(G, 1e-3, {}, pool, nb) <= 1e-9) continue;
        ++checked;
        Kernel k = Kernel::from_features(F);
        Indices a = run_select(Method::maxdet, Mode::P, k, {}, pool, nb, 1e-3, 0, SpaceImpl::kernel).batch;
        Indices b = run_select(Method::maxdet, Mode::P, k, {}, pool, nb, 1e-3, 0, SpaceImpl::feature).batch;
        agree += a == b && a == oracle::naive_greedy_maxdet(G, 1e-3, nb);
    }
    return {checked == 50 && agree == 50, fmt("%g/%g instances identical", agree, checked)};
}

Outcome tp_p_duality() {
    std::mt19937_64 rng(707);
    int checked = 0, agree = 0, tries = 0;
    while (checked < 25 && tries < 500) {
        ++tries;
        const int n = uniform_int(rng, 12, 40), d = uniform_int(rng, 2, 8), n_train = uniform_int(rng, 1, 5);
        Mat F = random_matrix(n, d, rng);
        Indices train = iota_indices(0, n_train), pool = iota_indices(n_train, n);
        const double s2 = 1e-2;
        const int nb = uniform_int(rng, 1, std::min(6, (n - n_train) / 2));
        if (maxdet_gap(F * F.transpose(), s2, train, pool, nb) <= 1e-9) continue;
        ++checked;
        Kernel k = Kernel::from_features(F);
        Kernel post = transform_posterior(k, train, s2);
        bool ok = true;
        for (Method m : {Method::maxdet, Method::bait_f, Method::bait_fb})
            ok = ok && run_select(m, Mode::TP, k, train, pool, nb, s2).batch ==
                           run_select(m, Mode::P, post, train, pool, nb, s2).batch;
        agree += ok;
    }
    return {checked == 25 && agree == 25, fmt("%g/%g instances identical for maxdet, bait-f, bait-fb", agree, checked)};
}

Outcome bait_tracking() {
    std::mt19937_64 rng(808);
    double worst_obj = 0, worst_trip = 0;
    for (int inst = 0; inst < 30; ++inst) {
        const int n = uniform_int(rng, 9, 32), d = uniform_int(rng, 1, 8);
        const double s2 = std::array{1e-3, 1e-1, 1.0}[inst % 3];
        Mat F = random_matrix(n, d, rng);
        const Indices tp = iota_indices(0, n);
        PosteriorFeatureState st(F, s2, F);
        Indices sel;
        double obj = oracle::naive_bait_objective(F, tp, sel, s2);
        std::vector<int> order = iota_indices(0, n);
        std::shuffle(order.begin(), order.end(), rng);
        for (int step = 0; step < std::min(n, 8); ++step) {
            const int x = order[step];
            const double predicted = st.v()[x] / (s2 + st.c()[x]);
            st.add(x);
            sel.push_back(x);
            const double next = oracle::naive_bait_objective(F, tp, sel, s2);
            worst_obj = std::max(worst_obj, std::abs((obj - next) - predicted) / std::abs(obj));
            obj = next;
        }
        if (n > 8) {
            const int y = order[8];
            const Mat g0 = st.phi() * st.phi().transpose();
            st.add(y);
            st.remove(y);
            worst_trip = std::max(worst_trip, max_rel(st.phi() * st.phi().transpose(), g0));
        }
    }
    return {worst_obj < 1e-8 && worst_trip < 1e-8,
            fmt("30 instances, objective rel err %.3g, round-trip Gram drift %.3g", worst_obj, worst_trip)};
}

// Smallest top-two gap of the Frank-Wolfe score along the feature-space path.
double fw_gap(const Mat& phi, int m0, int n_batch) {
    FrankWolfeFeatureState st(phi);
    std::vector<bool> remaining(phi.rows(), true);
    for (int x = 0; x < m0; ++x) {
        st.add(x);
        remaining[x] = false;
    }
    double gap = kInf;
    for (int s = 0; s < n_batch; ++s) {
        const Vec sc = st.scores();
        double best = -kInf, second = -kInf;
        int arg = -1;
        for (int i = 0; i < sc.size(); ++i) {
            if (!remaining[i]) continue;
            if (sc[i] > best) {
                second = best;
                best = sc[i];
                arg = i;
            } else if (sc[i] > second) {
                second = sc[i];
            }
        }
        if (second > -kInf) gap = std::min(gap, best - second);
        remaining[arg] = false;
        st.add(arg);
    }
    return gap;
}

Outcome frank_wolfe() {
    std::mt19937_64 rng(909);
    int checked = 0, agree = 0, tries = 0;
    while (checked < 25 && tries < 500) {
        ++tries;
        const int n = uniform_int(rng, 4, 64), d = uniform_int(rng, 1, 8), n_train = uniform_int(rng, 0, 3);
        Mat F = random_matrix(n, d, rng);
        Kernel k = Kernel::from_features(F);
        Indices train = iota_indices(0, n_train), pool = iota_indices(n_train, n);
        const int nb = uniform_int(rng, 1, std::min(10, n - n_train));
        const Mode mode = tries % 2 ? Mode::TP : Mode::P;
        const Indices cand = mode == Mode::TP ? concat(train, pool) : pool;
        if (fw_gap(k.features(cand), mode == Mode::TP ? n_train : 0, nb) <= 1e-9) continue;
        ++checked;
        agree += run_select(Method::fw, mode, k, train, pool, nb, 0, 0, SpaceImpl::kernel).batch ==
                 run_select(Method::fw, mode, k, train, pool, nb, 0, 0, SpaceImpl::feature).batch;
    }
    return {checked == 25 && agree == 25, fmt("%g/%g instances identical", agree, checked)};
}

Outcome maxdist_two_approx() {
    std::mt19937_64 rng(1010);
    double worst = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const int n_pool = uniform_int(rng, 2, 12), nb = uniform_int(rng, 1, std::min(4, n_pool));
        const int d = uniform_int(rng, 1, 4);
        Mat F = random_matrix(n_pool, d, rng);
        Mat G = F * F.transpose();
        Kernel k = Kernel::from_features(F);
        const Indices pool = iota_indices(0, n_pool);
        Indices batch = run_select(Method::maxdist, Mode::P, k, {}, pool, nb, 0).batch;
        const double greedy = oracle::cover_radius(G, pool, {}, batch);
        const double best = oracle::brute_force_cover_radius(G, nb, {}, pool);
        worst = std::max(worst, best > 0 ? greedy / best : (greedy > 1e-12 ? kInf : 0.0));
    }
    return {worst <= 2.0 + 1e-9, fmt("200 instances, worst ratio to optimum %.4g", worst)};
}

Outcome jl_property() {
    const double eps = 0.5, delta = 0.1;
    const int n_pts = 16, p = 253, n_seeds = 500;
    std::mt19937_64 rng(1111);
    Mat X = random_matrix(n_pts, 64, rng);
    GroundSet g = ground_of(X);
    Kernel k = base_linear(g);
    const Indices all = iota_indices(0, n_pts);
    const Mat G = k.gram(all);
    int violations = 0;
    for (int s = 0; s < n_seeds; ++s) {
        const Mat S = transform_rp(k, p, static_cast<std::uint64_t>(s)).gram(all);
        bool ok = true;
        for (int i = 0; i < n_pts && ok; ++i)
            for (int j = i + 1; j < n_pts && ok; ++j) {
                const double dk = std::sqrt(std::max(G(i, i) + G(j, j) - 2 * G(i, j), 0.0));
                const double ds = std::sqrt(std::max(S(i, i) + S(j, j) - 2 * S(i, j), 0.0));
                ok = (1 - eps) * dk <= ds && ds <= (1 + eps) * dk;
            }
        violations += !ok;
    }
    const double rate = double(violations) / n_seeds;
    const double bound = delta + 3 * std::sqrt(delta * (1 - delta) / n_seeds);
    return {rate <= bound, fmt("p = 253, violation rate %.3f (bound %.3f)", rate, bound)};
}

Outcome kmeanspp_law() {
    // Train point at the origin; pool at squared distances 1, 2, 3, 4.
    Mat F(5, 1);
    F << 0, 1, std::sqrt(2.0), std::sqrt(3.0), 2;
    Kernel k = Kernel::from_features(F);
    const int n_draws = 10000;
    std::vector<int> count(5, 0);
    for (int s = 0; s < n_draws; ++s)
        ++count[run_select(Method::kmeanspp, Mode::TP, k, {0}, {1, 2, 3, 4}, 1, 0, s).batch[0]];
    double chi2 = 0;
    for (int i = 1; i <= 4; ++i) {
        const double e = n_draws * i / 10.0;
        chi2 += (count[i] - e) * (count[i] - e) / e;
    }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(3), chi2));
    return {p > 0.01, fmt("chi2 = %.3f, p = %.3f", chi2, p)};
}

BmalRunConfig bench_config(const std::string& method, std::uint64_t seed) {
    BmalRunConfig c;
    c.data = "synthetic:friedman:n=6600,noise=0.3";
    c.method = method;
    c.mode = method == "random" ? "p" : "tp";
    c.kernel = "grad->rp(256)";
    c.init_train = 256;
    c.valid = 1024;
    c.n_batches = 4;
    c.batch_size = 256;
    c.hidden = {128, 128};
    c.epochs = 256;
    c.seed = seed;
    return c;
}

double method_statistic(const RunResult& r) {
    double s = 0;
    for (std::size_t t = 1; t < r.steps.size(); ++t) s += std::log(r.steps[t].metrics.rmse);
    return s / static_cast<double>(r.steps.size() - 1);
}

Outcome directional_benchmark() {
    const int reps = 10;
    std::vector<double> diff;
    double mean_random = 0, mean_lcmd = 0;
    for (int r = 0; r < reps; ++r) {
        const double a = method_statistic(run_bmal(bench_config("random", r)));
        const double b = method_statistic(run_bmal(bench_config("lcmd", r)));
        mean_random += a / reps;
        mean_lcmd += b / reps;
        diff.push_back(a - b);
        std::fprintf(stderr, "  rep %d: random %.4f lcmd-tp %.4f\n", r, a, b);
    }
    double m = 0, v = 0;
    for (double d : diff) m += d / reps;
    for (double d : diff) v += (d - m) * (d - m) / (reps - 1);
    const double t = m / std::sqrt(v / reps);
    const double p = boost::math::cdf(boost::math::complement(boost::math::students_t(reps - 1), t));
    char buf[200];
    std::snprintf(buf, sizeof buf, "mean log RMSE random %.4f, lcmd-tp %.4f, paired t = %.3f, one-sided p = %.4g",
                  mean_random, mean_lcmd, t, p);
    return {mean_lcmd < mean_random && p < 0.05, buf};
}

Outcome determinism() {
    int same = 0, total = 0;
    for (const char* method : {"lcmd", "kmeanspp", "bait-fb", "maxdet", "fw", "random"}) {
        BmalRunConfig c = bench_config(method, 42);
        c.data = "synthetic:friedman:n=2000,noise=0.3";
        c.init_train = 128;
        c.valid = 256;
        c.n_batches = 2;
        c.batch_size = 64;
        c.hidden = {32, 32};
        c.epochs = 16;
        if (std::string(method) == "bait-fb") c.kernel = "ll->train(1e-6)";
        RunResult a = run_bmal(c), b = run_bmal(c);
        for (auto* r : {&a, &b})
            for (auto& s : r->steps) s.selection_seconds = s.train_seconds = 0;
        same += a == b && to_json(a) == to_json(b);
        ++total;
    }
    return {same == total, fmt("%g/%g pipelines bit-identical", same, total)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "NTK identity", 10, ntk_identity},
        {2, "gradient correctness", 30, gradient_fd},
        {3, "NNGP convergence", 300, nngp_convergence},
        {4, "posterior dual-path equality", 10, posterior_dual_path},
        {5, "posterior composition", 10, posterior_composition},
        {6, "MaxDet triple equivalence", 30, maxdet_triple},
        {7, "TP/P duality", 30, tp_p_duality},
        {8, "BAIT objective tracking", 30, bait_tracking},
        {9, "Frank-Wolfe cross-implementation", 10, frank_wolfe},
        {10, "MaxDist 2-approximation", 60, maxdist_two_approx},
        {11, "JL property", 60, jl_property},
        {12, "KMeansPP sampling law", 10, kmeanspp_law},
        {13, "directional benchmark", 1800, directional_benchmark},
        {14, "determinism", 300, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s criterion %2d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs, c.limit_seconds, in_time ? "" : " TIME EXCEEDED");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
