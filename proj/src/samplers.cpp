#include "hbm/samplers.hpp"

#include "hbm/error.hpp"
#include "hbm/fingerprint.hpp"
#include "hbm/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string describe_point(std::span<const double> x) {
    std::ostringstream os;
    os.precision(6);
    os << '[';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ']';
    return os.str();
}

double safe_eval(const LogDensity& f, std::span<const double> x) {
    const double v = f(x);
    return std::isnan(v) ? kNegInf : v;
}

std::vector<double> slice_widths(const TargetSpec& target, const SamplerConfig& config) {
    const std::size_t d = target.dimension();
    if (!config.slice_widths.empty()) {
        if (config.slice_widths.size() != d)
            throw std::invalid_argument("slice_sample: one width per dimension is required");
        return config.slice_widths;
    }
    std::vector<double> w(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        const auto& s = target.support[j];
        if (std::isfinite(s.lower) && std::isfinite(s.upper)) w[j] = s.width() / 10.0;
    }
    return w;
}


// Principal axes of the recent burn-in window (active dimensions only),
// widths a few standard deviations. Keeps the old directions when the
// window is degenerate.
void adapt_directions(const std::vector<double>& history, const std::vector<std::size_t>& active,
                      std::size_t d, std::vector<std::vector<double>>& dirs,
                      std::vector<double>& widths) {
    const auto m = static_cast<Eigen::Index>(active.size());
    const auto n = static_cast<Eigen::Index>(history.size()) / m;
    if (n < 2 * m) return;
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> h(
        history.data(), n, m);
    const Eigen::RowVectorXd mean = h.colwise().mean();
    const Eigen::MatrixXd centered = h.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) return;
    const Eigen::VectorXd values = eig.eigenvalues();
    if (!(values.minCoeff() > 0.0) || !values.allFinite()) return;
    std::vector<std::vector<double>> new_dirs;
    std::vector<double> new_widths;
    for (Eigen::Index k = 0; k < m; ++k) {
        std::vector<double> u(d, 0.0);
        for (Eigen::Index a = 0; a < m; ++a) u[active[static_cast<std::size_t>(a)]] = eig.eigenvectors()(a, k);
        new_dirs.push_back(std::move(u));
        new_widths.push_back(3.0 * std::sqrt(values(k)));
    }
    dirs = std::move(new_dirs);
    widths = std::move(new_widths);
}

}  // namespace

std::vector<Interval> TargetSpec::unbounded(std::size_t dim) {
    return std::vector<Interval>(dim, Interval{-kInf, kInf});
}

void SamplerConfig::validate() const {
    if (n_samples < 1) throw std::invalid_argument("sampler: n_samples must be >= 1");
    if (!(burn_in >= 0.0 && burn_in < 1.0))
        throw std::invalid_argument("sampler: burn-in fraction must lie in [0, 1)");
    if (thin < 1) throw std::invalid_argument("sampler: thinning must be >= 1");
    if (!(tmcmc_target_cov > 0.0)) throw std::invalid_argument("sampler: TMCMC CoV target must be > 0");
    if (!(tmcmc_proposal_scale > 0.0))
        throw std::invalid_argument("sampler: TMCMC proposal scale must be > 0");
    if (tmcmc_chain_length < 1) throw std::invalid_argument("sampler: TMCMC chain length must be >= 1");
}

std::string SamplerConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "n=" << n_samples << ";burn=" << burn_in << ";thin=" << thin << ";seed=" << seed
       << ";w=";
    for (double w : slice_widths) os << w << ',';
    os << ";step=" << max_step_out << ";shrink=" << max_shrink << ";stage=" << tmcmc_stage_size
       << ";cov=" << tmcmc_target_cov << ";scale=" << tmcmc_proposal_scale
       << ";chain=" << tmcmc_chain_length << ";adapt=" << slice_adapt;
    return os.str();
}

SampleSet slice_sample(const TargetSpec& target, std::span<const double> init,
                       const SamplerConfig& config) {
    config.validate();
    const std::size_t d = target.dimension();
    if (init.size() != d) throw std::invalid_argument("slice_sample: initial point has wrong dimension");
    if (target.support.size() != d)
        throw std::invalid_argument("slice_sample: support must list one interval per dimension");
    for (std::size_t j = 0; j < d; ++j)
        if (!target.support[j].contains(init[j]))
            throw std::invalid_argument("slice_sample: initial point outside support " +
                                        describe_point(init));

    std::vector<double> x(init.begin(), init.end());
    double lx = safe_eval(target.log_target, x);
    if (!std::isfinite(lx))
        throw std::invalid_argument("slice_sample: log-target not finite at initial point " +
                                    describe_point(x));

    const auto widths = slice_widths(target, config);
    Rng rng = make_stream(config.seed, {0x51ce});
    std::exponential_distribution<double> expo(1.0);

    const std::size_t kept_span = config.n_samples * config.thin;
    const auto burn = static_cast<std::size_t>(
        std::ceil(static_cast<double>(kept_span) * config.burn_in / (1.0 - config.burn_in)));

    SampleSet out(target.labels);
    out.reserve(config.n_samples);
    out.provenance = {target.id, "slice", fingerprint(config.canonical()), config.seed};

    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < d; ++j)
        if (target.support[j].upper > target.support[j].lower && widths[j] > 0.0) active.push_back(j);

    // Update directions with their widths; the coordinate axes until adapted.
    std::vector<std::vector<double>> dirs;
    std::vector<double> dir_widths;
    for (std::size_t j : active) {
        std::vector<double> u(d, 0.0);
        u[j] = 1.0;
        dirs.push_back(std::move(u));
        dir_widths.push_back(widths[j]);
    }

    std::vector<double> probe = x;
    auto eval_at = [&](const std::vector<double>& u, double t) {
        for (std::size_t k = 0; k < d; ++k) probe[k] = x[k] + t * u[k];
        return safe_eval(target.log_target, probe);
    };

    auto step_error = [&](const char* what, std::size_t k) {
        const std::string name = dirs.size() == active.size() && dirs[k][active[k]] == 1.0
                                     ? target.labels[active[k]]
                                     : "direction " + std::to_string(k);
        return NumericalError(std::string("slice_sample: ") + what + " in '" + name + "' at " +
                              describe_point(x) + " (width " + std::to_string(dir_widths[k]) + ")");
    };

    // Burn-in windows after which the directions are re-estimated.
    std::vector<std::size_t> adapt_at;
    if (config.slice_adapt && active.size() > 1) {
        const std::size_t min_window = std::max<std::size_t>(20, 10 * active.size());
        for (std::size_t a = min_window; a <= burn; a *= 2) adapt_at.push_back(a);
    }
    std::vector<double> history;
    std::size_t next_adapt = 0;

    for (std::size_t it = 0; it < burn + kept_span; ++it) {
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            const auto& u = dirs[k];
            const double w = dir_widths[k];
            // Admissible step range along u inside the box.
            double tlo = -kInf, thi = kInf;
            for (std::size_t j = 0; j < d; ++j) {
                if (u[j] == 0.0) continue;
                const double a = (target.support[j].lower - x[j]) / u[j];
                const double b = (target.support[j].upper - x[j]) / u[j];
                tlo = std::max(tlo, std::min(a, b));
                thi = std::min(thi, std::max(a, b));
            }
            tlo = std::min(tlo, 0.0);
            thi = std::max(thi, 0.0);
            const double log_level = lx - expo(rng);

            double left = -w * uniform01(rng);
            double right = left + w;
            left = std::max(left, tlo);
            right = std::min(right, thi);

            std::size_t steps = 0;
            while (left > tlo && eval_at(u, left) > log_level) {
                left = std::max(left - w, tlo);
                if (++steps > config.max_step_out)
                    throw step_error(("stepping out exceeded " + std::to_string(config.max_step_out) +
                                      " steps; target may be improper")
                                         .c_str(),
                                     k);
            }
            steps = 0;
            while (right < thi && eval_at(u, right) > log_level) {
                right = std::min(right + w, thi);
                if (++steps > config.max_step_out)
                    throw step_error(("stepping out exceeded " + std::to_string(config.max_step_out) +
                                      " steps; target may be improper")
                                         .c_str(),
                                     k);
            }

            for (std::size_t shrinks = 0;; ++shrinks) {
                if (shrinks > config.max_shrink) throw step_error("shrinkage did not terminate", k);
                const double t = left + uniform01(rng) * (right - left);
                const double lc = eval_at(u, t);
                if (lc > log_level) {
                    for (std::size_t j = 0; j < d; ++j) x[j] += t * u[j];
                    lx = lc;
                    break;
                }
                if (t < 0.0)
                    left = t;
                else
                    right = t;
            }
        }
        if (it < burn && next_adapt < adapt_at.size()) {
            for (std::size_t j : active) history.push_back(x[j]);
            if (it + 1 == adapt_at[next_adapt]) {
                ++next_adapt;
                adapt_directions(history, active, d, dirs, dir_widths);
                history.clear();
            }
        }
        if (it >= burn && (it - burn) % config.thin == 0) out.push_back(x);
    }
    return out;
}

SampleSet tmcmc(const TemperingProblem& problem, const SamplerConfig& config, TmcmcTrace* trace) {
    config.validate();
    const std::size_t d = problem.labels.size();
    const std::size_t n = config.tmcmc_stage_size > 0 ? config.tmcmc_stage_size : config.n_samples;
    if (n < 2) throw std::invalid_argument("tmcmc: need at least two particles");

    Rng rng = make_stream(config.seed, {0x7e3c});
    std::vector<double> x(n * d);
    std::vector<double> loglik(n);
    std::vector<double> logprior(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = problem.sample_prior(rng);
        if (p.size() != d) throw std::invalid_argument("tmcmc: prior draw has wrong dimension");
        std::copy(p.begin(), p.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    parallel_for(n, config.threads, [&](std::size_t i) {
        const std::span<const double> xi(x.data() + i * d, d);
        logprior[i] = safe_eval(problem.log_prior, xi);
        loglik[i] = logprior[i] == kNegInf ? kNegInf : safe_eval(problem.log_likelihood, xi);
    });

    double beta = 0.0;
    double log_evidence = 0.0;
    double evidence_var = 0.0;
    if (trace) trace->betas.assign(1, 0.0);

    std::vector<double> w(n);
    auto weight_cov = [&](double dbeta, double lmax) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double wi = loglik[i] == kNegInf ? 0.0 : std::exp(dbeta * (loglik[i] - lmax));
            s += wi;
            s2 += wi * wi;
        }
        const double mean = s / static_cast<double>(n);
        const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
        return std::sqrt(var) / mean;
    };

    for (std::uint64_t stage = 1; beta < 1.0; ++stage) {
        double lmax = kNegInf;
        for (double l : loglik) lmax = std::max(lmax, l);
        if (lmax == kNegInf) throw NumericalError("tmcmc: every particle has zero likelihood");

        const double remaining = 1.0 - beta;
        double dbeta = remaining;
        if (weight_cov(remaining, lmax) > config.tmcmc_target_cov) {
            double lo = 0.0, hi = remaining;
            for (int k = 0; k < 100; ++k) {
                const double mid = 0.5 * (lo + hi);
                if (weight_cov(mid, lmax) > config.tmcmc_target_cov)
                    hi = mid;
                else
                    lo = mid;
            }
            dbeta = lo;
        }
        const double next_beta = dbeta >= remaining ? 1.0 : beta + dbeta;
        if (!(next_beta > beta)) throw NumericalError("tmcmc: tempering exponent failed to increase");

        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = loglik[i] == kNegInf ? 0.0 : std::exp(dbeta * (loglik[i] - lmax));
            s += w[i];
            s2 += w[i] * w[i];
        }
        const double mean_w = s / static_cast<double>(n);
        log_evidence += std::log(mean_w) + dbeta * lmax;
        const double var_w = std::max(0.0, s2 / static_cast<double>(n) - mean_w * mean_w);
        evidence_var += var_w / (static_cast<double>(n) * mean_w * mean_w);
        const double ess = s * s / s2;
        if (ess < 2.0)
            throw NumericalError("tmcmc: tempering collapse (effective sample size " +
                                 std::to_string(ess) + " at beta " + std::to_string(beta) + ")");
        beta = next_beta;
        if (trace) trace->betas.push_back(beta);

        // Weighted covariance of the current population drives the proposal.
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mu[static_cast<Eigen::Index>(j)] += w[i] / s * x[i * d + j];
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd dx(static_cast<Eigen::Index>(d));
            for (std::size_t j = 0; j < d; ++j)
                dx[static_cast<Eigen::Index>(j)] = x[i * d + j] - mu[static_cast<Eigen::Index>(j)];
            cov.noalias() += (w[i] / s) * dx * dx.transpose();
        }
        cov *= config.tmcmc_proposal_scale * config.tmcmc_proposal_scale;
        double jitter = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        while (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
            jitter = jitter == 0.0 ? 1e-12 * std::max(1e-300, cov.diagonal().cwiseAbs().maxCoeff()) : jitter * 10.0;
            if (!std::isfinite(jitter) || jitter > 1e100)
                throw NumericalError("tmcmc: proposal covariance is not positive definite");
            llt.compute(cov + jitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
        }
        const Eigen::MatrixXd chol = llt.matrixL();

        // Multinomial resampling.
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        std::vector<std::size_t> parent(n);
        for (auto& p : parent) p = pick(rng);

        std::vector<double> next_x(n * d);
        std::vector<double> next_ll(n), next_lp(n);
        std::vector<std::size_t> accepted(n, 0);
        parallel_for(n, config.threads, [&](std::size_t i) {
            Rng local = make_stream(config.seed, {0x7e3c, stage, i});
            std::normal_distribution<double> normal(0.0, 1.0);
            const std::size_t p = parent[i];
            Eigen::VectorXd cur(static_cast<Eigen::Index>(d));
            for (std::size_t j = 0; j < d; ++j) cur[static_cast<Eigen::Index>(j)] = x[p * d + j];
            double cur_ll = loglik[p], cur_lp = logprior[p];
            Eigen::VectorXd z(static_cast<Eigen::Index>(d));
            for (std::size_t step = 0; step < config.tmcmc_chain_length; ++step) {
                for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(local);
                const Eigen::VectorXd prop = cur + chol * z;
                const std::span<const double> ps(prop.data(), d);
                const double u = uniform01(local);
                const double lp = safe_eval(problem.log_prior, ps);
                if (lp == kNegInf) continue;
                const double ll = safe_eval(problem.log_likelihood, ps);
                if (ll == kNegInf) continue;
                const double log_ratio = (lp - cur_lp) + beta * (ll - cur_ll);
                if (std::log(u) < log_ratio) {
                    cur = prop;
                    cur_ll = ll;
                    cur_lp = lp;
                    ++accepted[i];
                }
            }
            for (std::size_t j = 0; j < d; ++j) next_x[i * d + j] = cur[static_cast<Eigen::Index>(j)];
            next_ll[i] = cur_ll;
            next_lp[i] = cur_lp;
        });
        x.swap(next_x);
        loglik.swap(next_ll);
        logprior.swap(next_lp);
        if (trace) {
            std::size_t acc = 0;
            for (auto a : accepted) acc += a;
            trace->acceptance.push_back(static_cast<double>(acc) /
                                        static_cast<double>(n * config.tmcmc_chain_length));
        }
    }

    SampleSet out(problem.labels, std::move(x));
    out.provenance = {problem.id, "tmcmc", fingerprint(config.canonical()), config.seed};
    out.evidence = Evidence{log_evidence, std::sqrt(evidence_var)};
    return out;
}

}  // namespace hbm
