#pragma once

#include <vector>

#include "mproj/forward/detector.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::fwd {

/// Shot-to-shot statistics of the pulsed source.
struct SaseParams {
    double gamma_shape = 3.0;        // intensity_scale ~ Gamma(shape, 1/shape), mean 1
    double jitter_sigma_um = 15.0;   // "a few tens of micrometers" beam displacement
    double multi_peak_prob = 0.02;   // probability of a doubled image
    // realized at render time when multi_peak_event is set:
    double ghost_offset_um = 30.0;   // in-plane displacement of the ghost image
    double ghost_weight = 0.4;       // fraction of fluence in the ghost

    void validate() const {
        if (!(gamma_shape > 0.0)) throw config_error("sase.gamma_shape must be positive");
        if (jitter_sigma_um < 0.0) throw config_error("sase.jitter_sigma_um must be >= 0");
        if (multi_peak_prob < 0.0 || multi_peak_prob > 1.0)
            throw config_error("sase.multi_peak_prob must lie in [0, 1]");
        if (ghost_weight < 0.0 || ghost_weight >= 1.0)
            throw config_error("sase.ghost_weight must lie in [0, 1)");
    }
};

/// Draws one ShotRecord per pulse. Streams are derived from (seed, pulse), so
/// the records are independent of evaluation order.
inline std::vector<ShotRecord> sase_shot_model(uint64_t seed, int n_pulses, const SaseParams& params,
                                               int n_beamlets, double pulse_period_ns = 886.0) {
    if (n_pulses < 1) throw usage_error("shot model needs n_pulses >= 1");
    params.validate();
    std::vector<ShotRecord> shots(n_pulses);
    for (int k = 0; k < n_pulses; ++k) {
        Rng rng = Rng::stream(seed, {0x5a5eu, static_cast<uint64_t>(k)});
        ShotRecord& s = shots[k];
        s.pulse_index = k;
        s.timestamp_ns = k * pulse_period_ns;
        s.intensity_scale.resize(n_beamlets);
        s.beam_displacement_um.resize(n_beamlets);
        for (int b = 0; b < n_beamlets; ++b) {
            s.intensity_scale[b] = rng.gamma(params.gamma_shape, 1.0 / params.gamma_shape);
            const double dx = params.jitter_sigma_um > 0.0 ? rng.normal(0.0, params.jitter_sigma_um) : 0.0;
            const double dy = params.jitter_sigma_um > 0.0 ? rng.normal(0.0, params.jitter_sigma_um) : 0.0;
            s.beam_displacement_um[b] = {dx, dy};
        }
        s.multi_peak_event = params.multi_peak_prob > 0.0 && rng.bernoulli(params.multi_peak_prob);
    }
    return shots;
}

}  // namespace mproj::fwd
