#pragma once

#include <array>
#include <cmath>
#include <string>

#include "mproj/util/errors.hpp"

namespace mproj::geom {

/// Mass attenuation coefficients mu/rho in cm^2/g, 5-30 keV.
/// Values are the NIST standard reference photon attenuation tables
/// (Hubbell & Seltzer) for dry air near sea level and liquid water; see
/// docs/attenuation.md. Interpolation is log-log since mu/rho is close to a
/// power law between absorption edges (none fall inside this window).
enum class Material { air, water };

namespace detail {
struct AttenuationTable {
    std::array<double, 7> energy_kev;
    std::array<double, 7> mu_over_rho;  // cm^2/g
};

inline const AttenuationTable& table(Material m) {
    static const AttenuationTable air{{5.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0},
                                      {40.27, 23.41, 9.921, 5.120, 1.614, 0.7779, 0.3538}};
    static const AttenuationTable water{{5.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0},
                                        {42.32, 24.63, 10.37, 5.329, 1.673, 0.8096, 0.3756}};
    return m == Material::air ? air : water;
}
}  // namespace detail

constexpr double air_density_g_cm3 = 1.205e-3;  // standard conditions
constexpr double water_density_g_cm3 = 0.998;

/// mass attenuation mu/rho (cm^2/g) at photon energy E, log-log interpolated.
inline double mass_attenuation_cm2_g(Material m, double e_kev) {
    const auto& t = detail::table(m);
    if (e_kev < t.energy_kev.front() || e_kev > t.energy_kev.back())
        throw range_error("photon energy " + std::to_string(e_kev) +
                          " keV outside attenuation table range [" +
                          std::to_string(t.energy_kev.front()) + ", " +
                          std::to_string(t.energy_kev.back()) + "] keV");
    size_t i = 0;
    while (i + 2 < t.energy_kev.size() && t.energy_kev[i + 1] < e_kev) ++i;
    const double x0 = std::log(t.energy_kev[i]), x1 = std::log(t.energy_kev[i + 1]);
    const double y0 = std::log(t.mu_over_rho[i]), y1 = std::log(t.mu_over_rho[i + 1]);
    const double f = (std::log(e_kev) - x0) / (x1 - x0);
    return std::exp(y0 + f * (y1 - y0));
}

/// Transmission through `path_m` meters of air at standard conditions.
inline double air_transmission(double path_m, double e_kev) {
    if (path_m < 0.0) throw domain_error("air path must be non-negative");
    const double mu = mass_attenuation_cm2_g(Material::air, e_kev) * air_density_g_cm3;  // 1/cm
    return std::exp(-mu * path_m * 100.0);
}

/// Linear attenuation coefficient of water in 1/um.
inline double water_mu_per_um(double e_kev) {
    const double mu_cm = mass_attenuation_cm2_g(Material::water, e_kev) * water_density_g_cm3;
    return mu_cm * 1e-4;
}

}  // namespace mproj::geom
