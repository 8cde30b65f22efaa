#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wursim {

/// Thrown when a polling system is driven above its stability limit
/// (aggregate load >= 1) and the requested quantity diverges.
class UnstableSystemError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Global timing and energy constants of one network scenario.
///
/// Durations are in seconds, powers in watts, energies in joules.
struct NetworkParams {
    std::size_t n_nodes = 100;
    double t_wu = 0.010;    ///< wake-up signal duration
    double tau0 = 0.005;    ///< max round-trip propagation time
    double t_p = 0.001;     ///< transmission time of one packet
    double p_wur = 365e-9;  ///< wake-up receiver listening power
    double p_pcr = 0.1;     ///< main radio power
    double e_wu = 365e-9 * 0.010;  ///< energy to receive one wake-up message
    double e_tx = 0.1 * 0.001;     ///< energy to transmit one packet + receive its ACK

    /// Duration of an idle polling slot.
    double idle_slot() const { return tau0 + t_wu; }

    void validate() const {
        if (n_nodes == 0) throw std::domain_error("NetworkParams: n_nodes must be positive");
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::domain_error(std::string("NetworkParams: ") + name + " must be finite and positive");
        };
        pos(t_wu, "t_wu");
        pos(tau0, "tau0");
        pos(t_p, "t_p");
        pos(p_wur, "p_wur");
        pos(p_pcr, "p_pcr");
        pos(e_wu, "e_wu");
        pos(e_tx, "e_tx");
    }
};

/// Baseline scenario constants: 15 ms polling slot, 1 ms packet,
/// 365 nW wake-up receiver, 100 mW main radio.
inline NetworkParams default_params(std::size_t n_nodes) {
    NetworkParams p;
    p.n_nodes = n_nodes;
    p.t_wu = 0.010;
    p.tau0 = 0.005;
    p.t_p = 0.001;
    p.p_wur = 365e-9;
    p.p_pcr = 0.1;
    p.e_wu = p.p_wur * p.t_wu;
    p.e_tx = p.p_pcr * p.t_p;
    return p;
}

/// Default aggregate-load sweep grid.
inline std::vector<double> default_loads() { return {0.01, 0.1, 0.2, 0.3, 0.4, 0.5}; }

/// Per-node Poisson arrival rates plus the aggregate load they realize.
struct NodeRates {
    std::vector<double> lambdas;   ///< packets per second, one entry per node
    double aggregate_load = 0.0;   ///< xi = sum_n lambda_n * t_p (dimensionless)

    double total_rate() const { return std::accumulate(lambdas.begin(), lambdas.end(), 0.0); }

    void validate(double t_p) const {
        for (double l : lambdas)
            if (l < 0.0 || !std::isfinite(l))
                throw std::domain_error("NodeRates: every lambda must be finite and >= 0");
        const double recomputed = total_rate() * t_p;
        const double scale = std::max(std::abs(aggregate_load), 1.0);
        if (std::abs(recomputed - aggregate_load) > 1e-12 * scale)
            throw std::domain_error("NodeRates: aggregate_load does not match sum(lambda_n * t_p)");
    }
};

/// Homogeneous rate vector realizing aggregate load `xi`.
inline NodeRates uniform_rates(std::size_t n, double xi, double t_p) {
    NodeRates r;
    r.lambdas.assign(n, xi / t_p / static_cast<double>(n));
    r.aggregate_load = xi;
    return r;
}

}  // namespace wursim
