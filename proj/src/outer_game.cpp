#include "evgame/outer_game.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "evgame/digest.hpp"
#include "evgame/errors.hpp"
#include "json.hpp"

namespace evgame {

namespace {

constexpr double kArgmaxTieRelTol = 1e-12;
constexpr double kStrategySumTol = 1e-12;

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

void check_complete(const PayoffTensor& tensor) {
    if (!tensor.complete()) {
        throw ConfigError("payoff tensor is incomplete (" + std::to_string(tensor.completed_count()) +
                          " of " + std::to_string(tensor.size()) + " entries)");
    }
}

void check_model(const BehaviorModel& model, int n) {
    if (model.kind == BehaviorModel::Kind::Pt) {
        if (static_cast<int>(model.alphas.size()) != n) {
            throw ConfigError("behavior model: alpha vector size does not match aggregator count");
        }
        for (double a : model.alphas) {
            if (!(a > 0.0 && a <= 1.0)) throw ConfigError("behavior model: alpha outside (0,1]");
        }
    }
}

void check_strategies(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies) {
    const auto& dims = tensor.dims();
    if (strategies.size() != dims.size()) {
        throw ConfigError("strategies: profile size does not match aggregator count");
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& p = strategies[i].probs;
        if (static_cast<int>(p.size()) != dims[i]) {
            throw ConfigError("strategies: aggregator " + std::to_string(i + 1) +
                              " has wrong support size");
        }
        double sum = 0.0;
        for (double v : p) {
            if (v < 0.0) throw ConfigError("strategies: negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kStrategySumTol) {
            throw ConfigError("strategies: probabilities of aggregator " + std::to_string(i + 1) +
                              " do not sum to 1");
        }
    }
}

int argmax_smallest_slot(const std::vector<double>& q) {
    int best = 0;
    for (int t = 1; t < static_cast<int>(q.size()); ++t) {
        double tol = kArgmaxTieRelTol * std::max(std::abs(q[t]), std::abs(q[best]));
        if (q[t] > q[best] + tol) best = t;
    }
    return best;
}

// Flattened per-aggregator payoff arrays plus the axis-contraction machinery
// used by the iteration (the direct full-sum routes live in expected_payoff
// and pure_strategy_payoff and stay independent of this path).
class Evaluator {
public:
    explicit Evaluator(const PayoffTensor& tensor) : dims_(tensor.dims()) {
        check_complete(tensor);
        n_ = static_cast<int>(dims_.size());
        K_ = tensor.size();
        F_.assign(n_, std::vector<double>(K_));
        for (std::uint64_t k = 0; k < K_; ++k) {
            const auto& payoffs = tensor.entry(k).payoffs;
            for (int i = 0; i < n_; ++i) F_[i][k] = payoffs[i];
        }
    }

    int players() const { return n_; }
    const std::vector<int>& dims() const { return dims_; }

    // Opponent probability vectors as seen by evaluator i.
    std::vector<std::vector<double>> opponent_weights(const std::vector<MixedStrategy>& a,
                                                      const BehaviorModel& model, int i) const {
        std::vector<std::vector<double>> omega(n_);
        for (int j = 0; j < n_; ++j) {
            if (j == i) continue;
            omega[j] = a[j].probs;
            if (model.kind == BehaviorModel::Kind::Pt) {
                for (double& v : omega[j]) v = prelec_weight(v, model.alphas[i]);
            }
        }
        return omega;
    }

    // q_i(t) for every admissible start t: contract F_i over all axes but i.
    std::vector<double> q_for(const std::vector<MixedStrategy>& a, const BehaviorModel& model,
                              int i) const {
        auto omega = opponent_weights(a, model, i);
        const std::vector<double>* src = &F_[i];
        std::uint64_t len = K_;
        bool into_a = true;
        for (int j = n_ - 1; j > i; --j) {
            const int m = dims_[j];
            const std::uint64_t out_len = len / m;
            std::vector<double>& dst = into_a ? buf_a_ : buf_b_;
            dst.resize(out_len);
            const double* s = src->data();
            const double* w = omega[j].data();
            for (std::uint64_t b = 0; b < out_len; ++b) {
                double acc = 0.0;
                const double* base = s + b * m;
                for (int t = 0; t < m; ++t) acc += base[t] * w[t];
                dst[b] = acc;
            }
            src = &dst;
            len = out_len;
            into_a = !into_a;
        }

        // src now has shape dims[0..i] with axis i fastest; fold the leading
        // axes with an odometer that keeps prefix weight products.
        const int mi = dims_[i];
        std::vector<double> q(mi, 0.0);
        const std::uint64_t lead = len / mi;
        std::vector<int> digit(i, 0);
        std::vector<double> prefix(i + 1);
        prefix[0] = 1.0;
        for (int j = 0; j < i; ++j) prefix[j + 1] = prefix[j] * omega[j][0];
        const double* s = src->data();
        for (std::uint64_t b = 0;;) {
            const double w = prefix[i];
            if (w != 0.0) {
                const double* base = s + b * mi;
                for (int t = 0; t < mi; ++t) q[t] += w * base[t];
            }
            if (++b == lead) break;
            int j = i - 1;
            for (;;) {
                if (++digit[j] < dims_[j]) break;
                digit[j] = 0;
                --j;
            }
            for (; j < i; ++j) prefix[j + 1] = prefix[j] * omega[j][digit[j]];
        }
        return q;
    }

    std::vector<std::vector<double>> q_all(const std::vector<MixedStrategy>& a,
                                           const BehaviorModel& model) const {
        std::vector<std::vector<double>> qs(n_);
        for (int i = 0; i < n_; ++i) qs[i] = q_for(a, model, i);
        return qs;
    }

private:
    std::vector<int> dims_;
    int n_ = 0;
    std::uint64_t K_ = 0;
    std::vector<std::vector<double>> F_;
    mutable std::vector<double> buf_a_, buf_b_;
};

double epsilon_from_qs(const std::vector<std::vector<double>>& qs,
                       const std::vector<MixedStrategy>& a) {
    double eps = 0.0;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (std::size_t t = 0; t < qs[i].size(); ++t) {
            best = std::max(best, qs[i][t]);
            value += a[i].probs[t] * qs[i][t];
        }
        eps = std::max(eps, best - value);
    }
    return std::max(eps, 0.0);
}

}  // namespace

std::string BehaviorModel::descriptor() const {
    if (kind == Kind::Eut) return "eut";
    std::ostringstream ss;
    ss << "pt(alpha=";
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (i) ss << ",";
        ss << alphas[i];
    }
    ss << ")";
    return ss.str();
}

double prelec_weight(double p, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("prelec_weight: alpha outside (0,1]");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("prelec_weight: probability outside [0,1]");
    if (alpha == 1.0) return p;  // identity; keeps PT(alpha=1) equal to EUT bit-for-bit
    if (p == 0.0) return 0.0;    // continuous extension
    if (p == 1.0) return 1.0;
    return std::exp(-std::pow(-std::log(p), alpha));
}

double expected_payoff(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                       const BehaviorModel& model, int aggregator) {
    check_complete(tensor);
    check_strategies(tensor, strategies);
    check_model(model, tensor.num_aggregators());
    const auto& dims = tensor.dims();
    const int n = tensor.num_aggregators();
    if (aggregator < 0 || aggregator >= n) throw std::invalid_argument("expected_payoff: bad aggregator");

    // Per-axis factors: own probabilities stay objective under both models.
    std::vector<std::vector<double>> vecs(n);
    for (int j = 0; j < n; ++j) {
        vecs[j] = strategies[j].probs;
        if (model.kind == BehaviorModel::Kind::Pt && j != aggregator) {
            for (double& v : vecs[j]) v = prelec_weight(v, model.alphas[aggregator]);
        }
    }

    KahanSum sum;
    std::vector<int> digit(n, 0);
    std::vector<double> prefix(n + 1);
    prefix[0] = 1.0;
    for (int j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * vecs[j][0];
    const std::uint64_t K = tensor.size();
    for (std::uint64_t k = 0;;) {
        sum.add(tensor.entry(k).payoffs[aggregator] * prefix[n]);
        if (++k == K) break;
        int j = n - 1;
        for (;;) {
            if (++digit[j] < dims[j]) break;
            digit[j] = 0;
            --j;
        }
        for (; j < n; ++j) prefix[j + 1] = prefix[j] * vecs[j][digit[j]];
    }
    return sum.sum;
}

double pure_strategy_payoff(const PayoffTensor& tensor, int start_slot,
                            const std::vector<MixedStrategy>& strategies, const BehaviorModel& model,
                            int aggregator) {
    check_complete(tensor);
    check_strategies(tensor, strategies);
    check_model(model, tensor.num_aggregators());
    const auto& dims = tensor.dims();
    const int n = tensor.num_aggregators();
    if (aggregator < 0 || aggregator >= n) throw std::invalid_argument("pure_strategy_payoff: bad aggregator");
    if (start_slot < 1 || start_slot > dims[aggregator]) {
        throw std::invalid_argument("pure_strategy_payoff: start slot outside the admissible set");
    }

    std::vector<std::vector<double>> vecs(n);
    for (int j = 0; j < n; ++j) {
        if (j == aggregator) {
            vecs[j].assign(dims[j], 0.0);
            vecs[j][start_slot - 1] = 1.0;  // own strategy degenerate, own factor excluded
        } else {
            vecs[j] = strategies[j].probs;
            if (model.kind == BehaviorModel::Kind::Pt) {
                for (double& v : vecs[j]) v = prelec_weight(v, model.alphas[aggregator]);
            }
        }
    }

    KahanSum sum;
    std::vector<int> digit(n, 0);
    std::vector<double> prefix(n + 1);
    prefix[0] = 1.0;
    for (int j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * vecs[j][0];
    const std::uint64_t K = tensor.size();
    for (std::uint64_t k = 0;;) {
        if (prefix[n] != 0.0) sum.add(tensor.entry(k).payoffs[aggregator] * prefix[n]);
        if (++k == K) break;
        int j = n - 1;
        for (;;) {
            if (++digit[j] < dims[j]) break;
            digit[j] = 0;
            --j;
        }
        for (; j < n; ++j) prefix[j + 1] = prefix[j] * vecs[j][digit[j]];
    }
    return sum.sum;
}

MixedStrategy best_reply_vertex(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                                const BehaviorModel& model, int aggregator) {
    check_strategies(tensor, strategies);
    check_model(model, tensor.num_aggregators());
    Evaluator ev(tensor);
    std::vector<double> q = ev.q_for(strategies, model, aggregator);
    MixedStrategy z;
    z.probs.assign(q.size(), 0.0);
    z.probs[argmax_smallest_slot(q)] = 1.0;
    return z;
}

double epsilon_certificate(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                           const BehaviorModel& model) {
    check_strategies(tensor, strategies);
    check_model(model, tensor.num_aggregators());
    Evaluator ev(tensor);
    return epsilon_from_qs(ev.q_all(strategies, model), strategies);
}

std::vector<MixedStrategy> uniform_strategies(const PayoffTensor& tensor) {
    std::vector<MixedStrategy> a(tensor.num_aggregators());
    for (int i = 0; i < tensor.num_aggregators(); ++i) {
        int m = tensor.dims()[i];
        a[i].probs.assign(m, 1.0 / m);
    }
    return a;
}

double default_eps_target(const PayoffTensor& tensor) {
    return 1e-3 * tensor.median_abs_payoff();
}

OuterSolution iterate_to_equilibrium(const PayoffTensor& tensor, std::vector<MixedStrategy> init,
                                     const BehaviorModel& model, const OuterOptions& opt) {
    if (!(opt.beta > 0.0 && opt.beta < 1.0)) throw ConfigError("iterate_to_equilibrium: beta outside (0,1)");
    if (opt.max_iters < 0) throw ConfigError("iterate_to_equilibrium: negative max_iters");
    check_strategies(tensor, init);
    check_model(model, tensor.num_aggregators());
    Evaluator ev(tensor);

    OuterSolution sol;
    sol.model = model;
    sol.beta = opt.beta;
    sol.eps_target = opt.eps_target ? *opt.eps_target : default_eps_target(tensor);
    sol.scenario_digest = tensor.scenario_digest();
    sol.tensor_digest = tensor.content_digest();

    const int n = ev.players();
    std::vector<MixedStrategy> a = std::move(init);
    double eps = 0.0;
    int k = 0;
    bool reached = false;
    for (;; ++k) {
        auto qs = ev.q_all(a, model);
        eps = epsilon_from_qs(qs, a);
        if (opt.record_trajectory) sol.trajectory.push_back({k, eps, a});
        if (eps <= sol.eps_target) {
            reached = true;
            break;
        }
        if (k >= opt.max_iters) break;

        const double step = opt.beta / (k + 1);
        for (int i = 0; i < n; ++i) {
            int z = argmax_smallest_slot(qs[i]);
            auto& p = a[i].probs;
            for (double& v : p) v *= 1.0 - step;
            p[z] += step;
            double sum = 0.0;
            for (double v : p) sum += v;
            for (double& v : p) v /= sum;  // hold the sum at 1 across many iterates
        }
    }

    sol.strategies = std::move(a);
    sol.epsilon = eps;
    sol.iterations = k;
    sol.reached_target = reached;
    return sol;
}

// ---- solution files ----

namespace {

using nlohmann::json;

}  // namespace

void save_solution(const OuterSolution& sol, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSolutionSchemaVersion;
    j["model"] = {
        {"kind", sol.model.kind == BehaviorModel::Kind::Eut ? "eut" : "pt"},
        {"alphas", sol.model.alphas},
    };
    j["beta"] = sol.beta;
    j["eps_target"] = sol.eps_target;
    j["epsilon"] = sol.epsilon;
    j["iterations"] = sol.iterations;
    j["reached_target"] = sol.reached_target;
    j["scenario_digest"] = sol.scenario_digest;
    j["tensor_digest"] = sol.tensor_digest;
    j["strategies"] = json::array();
    for (const auto& s : sol.strategies) j["strategies"].push_back(s.probs);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write solution file: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed while writing solution file: " + path.string());
}

OuterSolution load_solution(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open solution file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("solution: malformed JSON: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<std::string>() != kSolutionSchemaVersion) {
            throw IoError("solution: unsupported schema_version");
        }
        OuterSolution sol;
        std::string kind = j.at("model").at("kind").get<std::string>();
        if (kind == "eut") {
            sol.model = BehaviorModel::eut();
        } else if (kind == "pt") {
            sol.model = BehaviorModel::pt(j.at("model").at("alphas").get<std::vector<double>>());
        } else {
            throw IoError("solution: unknown model kind '" + kind + "'");
        }
        sol.beta = j.at("beta").get<double>();
        sol.eps_target = j.at("eps_target").get<double>();
        sol.epsilon = j.at("epsilon").get<double>();
        sol.iterations = j.at("iterations").get<int>();
        sol.reached_target = j.at("reached_target").get<bool>();
        sol.scenario_digest = j.at("scenario_digest").get<std::string>();
        sol.tensor_digest = j.at("tensor_digest").get<std::string>();
        for (const auto& js : j.at("strategies")) {
            MixedStrategy s;
            s.probs = js.get<std::vector<double>>();
            sol.strategies.push_back(std::move(s));
        }
        return sol;
    } catch (const json::exception& e) {
        throw IoError(std::string("solution: missing or mistyped field: ") + e.what());
    }
}

std::string solution_digest(const OuterSolution& sol) {
    DigestBuffer buf;
    buf.put_str("evgame-solution-digest-v1");
    buf.put_str(sol.scenario_digest);
    buf.put_str(sol.tensor_digest);
    buf.put_str(sol.model.descriptor());
    buf.put_f64(sol.beta);
    buf.put_f64(sol.eps_target);
    buf.put_f64(sol.epsilon);
    buf.put_u64(static_cast<std::uint64_t>(sol.iterations));
    buf.put_u32(sol.reached_target ? 1 : 0);
    buf.put_u32(static_cast<std::uint32_t>(sol.strategies.size()));
    for (const auto& s : sol.strategies) buf.put_f64_vec(s.probs);
    return buf.hex();
}

}  // namespace evgame
