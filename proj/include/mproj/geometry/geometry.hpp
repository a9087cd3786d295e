#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/geometry/attenuation.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::geom {

/// hc in keV*Angstrom; lambda[A] = hc / E[keV].
constexpr double hc_kev_angstrom = 12.3984;

inline double wavelength_from_energy(double e_kev) {
    if (!(e_kev > 0.0)) throw domain_error("photon energy must be positive");
    return hc_kev_angstrom / e_kev;
}

enum class CrystalGeometry { symmetric_laue, symmetric_bragg };
enum class Polarization { sigma, pi };

struct CrystalReflection {
    double lattice_constant_angstrom = 3.567;  // diamond default
    std::array<int, 3> hkl{1, 1, 1};
    CrystalGeometry geometry = CrystalGeometry::symmetric_laue;
    Polarization polarization = Polarization::pi;

    double d_spacing_angstrom() const {
        if (!(lattice_constant_angstrom > 0.0)) throw domain_error("lattice constant must be positive");
        const double s = static_cast<double>(hkl[0]) * hkl[0] + static_cast<double>(hkl[1]) * hkl[1] +
                         static_cast<double>(hkl[2]) * hkl[2];
        if (s == 0.0) throw domain_error("hkl must not be (0,0,0)");
        return lattice_constant_angstrom / std::sqrt(s);
    }
};

/// Full deflection 2*theta in degrees for a reflection at photon energy E.
inline double bragg_deflection_deg(const CrystalReflection& refl, double e_kev) {
    const double lambda = wavelength_from_energy(e_kev);
    const double d = refl.d_spacing_angstrom();
    const double s = lambda / (2.0 * d);
    if (s > 1.0) {
        std::ostringstream msg;
        msg << "reflection (" << refl.hkl[0] << refl.hkl[1] << refl.hkl[2]
            << ") inaccessible at " << e_kev << " keV: wavelength " << lambda
            << " A exceeds 2d = " << 2.0 * d << " A (d = " << d << " A)";
        throw domain_error(msg.str());
    }
    return rad_to_deg(2.0 * std::asin(s));
}

/// P = 1 for sigma polarization, cos^2(2*theta) for pi.
inline double polarization_factor(double two_theta_deg, Polarization pol) {
    if (two_theta_deg < 0.0 || two_theta_deg > 180.0)
        throw domain_error("2theta must lie in [0, 180] degrees");
    if (pol == Polarization::sigma) return 1.0;
    const double c = std::cos(deg_to_rad(two_theta_deg));
    return c * c;
}

/// One crystal splitter plus the detector arm it feeds.
struct SplitterSpec {
    std::string id;
    CrystalReflection reflection;
    double efficiency = 1.0;            // diffraction efficiency, free scalar
    double sample_to_detector_m = 0.25;
    double pixel_pitch_um = 3.2;
};

/// Single source of truth for a simulated experiment.
struct BeamlineConfig {
    double photon_energy_kev = 10.0;
    std::vector<SplitterSpec> splitters;
    double air_path_m = 2.0;
    double pulse_period_ns = 886.0;
    double camera_frame_period_ns = 890.0;
    int frames_per_train = 128;

    void validate() const {
        if (!(photon_energy_kev > 0.0)) throw config_error("beamline.photon_energy must be positive");
        if (!(pulse_period_ns > 0.0)) throw config_error("beamline.pulse_period_ns must be positive");
        if (frames_per_train < 1) throw config_error("beamline.frames_per_train must be >= 1");
        for (const auto& s : splitters) {
            if (!(s.pixel_pitch_um > 0.0))
                throw config_error("beamline." + s.id + ".pixel_pitch_um must be positive");
            if (!(s.efficiency > 0.0))
                throw config_error("beamline." + s.id + ".efficiency must be positive");
        }
    }
};

/// In-plane detector frame: origin on the beamlet axis, axis_u horizontal
/// (in the diffraction plane), axis_v vertical. Units are micrometers.
struct DetectorFrame {
    Vec3 origin;
    Vec3 axis_u;
    Vec3 axis_v;
};

struct BeamletGeometry {
    std::string id;
    Vec3 direction;              // unit vector, diffraction in the x-z plane
    double two_theta_deg = 0.0;
    double flux_factor = 1.0;    // polarization x air transmission x efficiency
    DetectorFrame frame;
    double pixel_pitch_um = 3.2;
};

/// Direct beam travels along +z; all splitters deflect in the horizontal
/// (x-z) plane, matching a single shared diffraction plane.
inline std::vector<BeamletGeometry> beamlet_geometry(const BeamlineConfig& config) {
    config.validate();
    std::vector<BeamletGeometry> out;
    out.reserve(config.splitters.size());
    for (const auto& spl : config.splitters) {
        BeamletGeometry g;
        g.id = spl.id;
        g.two_theta_deg = bragg_deflection_deg(spl.reflection, config.photon_energy_kev);
        const double tt = deg_to_rad(g.two_theta_deg);
        g.direction = rotate_horizontal(Vec3{0, 0, 1}, tt);
        g.flux_factor = polarization_factor(g.two_theta_deg, spl.reflection.polarization) *
                        air_transmission(config.air_path_m, config.photon_energy_kev) * spl.efficiency;
        const double dist_um = spl.sample_to_detector_m * 1e6;
        g.frame.origin = g.direction * dist_um;
        g.frame.axis_u = rotate_horizontal(Vec3{1, 0, 0}, tt);
        g.frame.axis_v = Vec3{0, 1, 0};
        g.pixel_pitch_um = spl.pixel_pitch_um;
        out.push_back(g);
    }
    return out;
}

/// Paper-like default: 10 keV, diamond (111) and (220) splitters in Laue
/// geometry with the electric field in the diffraction plane.
inline BeamlineConfig default_beamline() {
    BeamlineConfig c;
    c.splitters = {
        SplitterSpec{"c111", CrystalReflection{3.567, {1, 1, 1}}, 0.8, 0.25, 3.2},
        SplitterSpec{"c220", CrystalReflection{3.567, {2, 2, 0}}, 0.5, 0.25, 6.4},
    };
    return c;
}

}  // namespace mproj::geom
