#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/forward/acquisition.hpp"
#include "mproj/geometry/geometry.hpp"
#include "mproj/phantom/phantom.hpp"
#include "mproj/preprocess/pipeline.hpp"
#include "mproj/recon/trainer.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::io {

/// Output/extraction settings.
struct IoConfig {
    int extract_n = 512;
    double extract_sigma = 2.0;
    int extract_downsample = 4;
    int extract_count = 4;            // time points to extract; 0 = every frame
    double iso_threshold_per_um = -1. ; // -1 = half of the phantom's mu_water
    std::vector<std::string> export_modes = {"mip", "montage"};
    char mip_axis = 'y';
    size_t memory_cap_mb = 4096;
    int64_t volume_tile_points = 65536;
};

/// Full validated configuration; defaults reproduce the reference experiment.
struct Config {
    fwd::AcquisitionConfig acq;                 // beamline, detector, shot model
    phantom::CollisionPhantom collision = phantom::default_collision_phantom();
    bool mu_water_auto = true;                  // mu from the water table at the beam energy
    prep::PipelineOptions prep;
    std::vector<std::string> register_views = {"c111"};
    std::optional<std::pair<double, double>> roi_center;  // unset = auto
    recon::TrainConfig train;
    IoConfig io;

    void resolve() {
        if (mu_water_auto)
            collision.mu_water_per_um = geom::water_mu_per_um(acq.beamline.photon_energy_kev);
        prep.harmonize.roi_center_px = roi_center;
        acq.beamline.validate();
        acq.detector.validate();
        acq.sase.validate();
        collision.validate();
        train.validate();
    }
};

namespace detail {

struct IniData {
    // section -> ordered key/value pairs
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

    std::vector<std::pair<std::string, std::string>>* find(const std::string& name) {
        for (auto& s : sections)
            if (s.first == name) return &s.second;
        return nullptr;
    }
};

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline IniData parse_ini(const std::string& text) {
    IniData data;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line.substr(0, line.find_first_of("#;")));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw config_error("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(t.substr(1, t.size() - 2));
            if (!data.find(section)) data.sections.push_back({section, {}});
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw config_error("config line " + std::to_string(lineno) + ": key outside any section");
        data.find(section)->push_back({trim(t.substr(0, eq)), trim(t.substr(eq + 1))});
    }
    return data;
}

/// Typed accessor over one section that tracks consumed keys so unknown keys
/// can be rejected with their full path.
class SectionReader {
  public:
    SectionReader(const std::string& name, std::vector<std::pair<std::string, std::string>>* kv)
        : name_(name), kv_(kv) {
        if (kv_) used_.assign(kv_->size(), false);
    }

    std::optional<std::string> raw(const std::string& key) {
        if (!kv_) return std::nullopt;
        for (size_t i = 0; i < kv_->size(); ++i)
            if ((*kv_)[i].first == key) {
                used_[i] = true;
                return (*kv_)[i].second;
            }
        return std::nullopt;
    }

    void get(const std::string& key, double& out) {
        if (auto v = raw(key)) {
            try {
                size_t pos = 0;
                out = std::stod(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("");
            } catch (...) {
                throw config_error(path(key) + ": expected a number, got '" + *v + "'");
            }
        }
    }
    void get(const std::string& key, int& out) {
        double d = out;
        get(key, d);
        out = static_cast<int>(d);
        if (static_cast<double>(out) != d) throw config_error(path(key) + ": expected an integer");
    }
    void get(const std::string& key, int64_t& out) {
        double d = static_cast<double>(out);
        get(key, d);
        out = static_cast<int64_t>(d);
    }
    void get(const std::string& key, uint64_t& out) {
        double d = static_cast<double>(out);
        get(key, d);
        if (d < 0) throw config_error(path(key) + ": expected a non-negative integer");
        out = static_cast<uint64_t>(d);
    }
    void get(const std::string& key, size_t& out) {
        uint64_t v = out;
        get(key, v);
        out = static_cast<size_t>(v);
    }
    void get(const std::string& key, bool& out) {
        if (auto v = raw(key)) {
            if (*v == "true" || *v == "1")
                out = true;
            else if (*v == "false" || *v == "0")
                out = false;
            else
                throw config_error(path(key) + ": expected true/false, got '" + *v + "'");
        }
    }
    void get(const std::string& key, std::string& out) {
        if (auto v = raw(key)) out = *v;
    }

    std::vector<double> numbers(const std::string& key, const std::string& value) {
        std::vector<double> out;
        std::istringstream in(value);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            try {
                out.push_back(std::stod(trim(tok)));
            } catch (...) {
                throw config_error(path(key) + ": expected a comma-separated number list");
            }
        }
        return out;
    }

    void get_vec3(const std::string& key, Vec3& out) {
        if (auto v = raw(key)) {
            const auto n = numbers(key, *v);
            if (n.size() != 3) throw config_error(path(key) + ": expected three numbers");
            out = {n[0], n[1], n[2]};
        }
    }

    void get_list(const std::string& key, std::vector<std::string>& out) {
        if (auto v = raw(key)) {
            out.clear();
            std::istringstream in(*v);
            std::string tok;
            while (std::getline(in, tok, ',')) {
                const std::string t = trim(tok);
                if (!t.empty()) out.push_back(t);
            }
        }
    }

    void get_int_list(const std::string& key, std::vector<int64_t>& out) {
        if (auto v = raw(key)) {
            const auto n = numbers(key, *v);
            out.assign(n.begin(), n.end());
        }
    }

    void reject_unknown(const std::vector<std::string>& known_prefixes = {}) {
        if (!kv_) return;
        for (size_t i = 0; i < kv_->size(); ++i) {
            if (used_[i]) continue;
            bool prefixed = false;
            for (const auto& p : known_prefixes)
                if ((*kv_)[i].first.rfind(p, 0) == 0) prefixed = true;
            if (!prefixed)
                throw config_error("unknown config key " + path((*kv_)[i].first));
        }
    }

    std::string path(const std::string& key) const { return name_ + "." + key; }

  private:
    std::string name_;
    std::vector<std::pair<std::string, std::string>>* kv_;
    std::vector<bool> used_;
};

}  // namespace detail

/// Parse a structured-text configuration. An empty file yields the full
/// default configuration; unknown sections or keys are rejected with their
/// key path.
inline Config parse_config_text(const std::string& text) {
    detail::IniData ini = detail::parse_ini(text);
    for (const auto& s : ini.sections) {
        if (s.first != "beamline" && s.first != "phantom" && s.first != "detector" &&
            s.first != "preprocess" && s.first != "train" && s.first != "io")
            throw config_error("unknown config section [" + s.first + "]");
    }

    Config c;
    {
        detail::SectionReader r("beamline", ini.find("beamline"));
        auto& b = c.acq.beamline;
        r.get("photon_energy_kev", b.photon_energy_kev);
        if (!(b.photon_energy_kev > 0.0))
            throw config_error("beamline.photon_energy_kev must be positive");
        r.get("pulse_period_ns", b.pulse_period_ns);
        r.get("camera_frame_period_ns", b.camera_frame_period_ns);
        r.get("frames_per_train", b.frames_per_train);
        r.get("air_path_m", b.air_path_m);
        std::vector<std::string> ids;
        for (const auto& s : b.splitters) ids.push_back(s.id);
        r.get_list("splitters", ids);
        std::vector<geom::SplitterSpec> specs;
        for (const auto& id : ids) {
            geom::SplitterSpec spec;
            spec.id = id;
            for (const auto& old : b.splitters)
                if (old.id == id) spec = old;
            double a = spec.reflection.lattice_constant_angstrom;
            r.get(id + ".lattice_angstrom", a);
            spec.reflection.lattice_constant_angstrom = a;
            if (auto v = r.raw(id + ".hkl")) {
                const auto n = r.numbers(id + ".hkl", *v);
                if (n.size() != 3) throw config_error("beamline." + id + ".hkl: expected three integers");
                spec.reflection.hkl = {static_cast<int>(n[0]), static_cast<int>(n[1]),
                                       static_cast<int>(n[2])};
            }
            std::string geo = spec.reflection.geometry == geom::CrystalGeometry::symmetric_laue
                                  ? "symmetric-laue"
                                  : "symmetric-bragg";
            r.get(id + ".geometry", geo);
            if (geo == "symmetric-laue")
                spec.reflection.geometry = geom::CrystalGeometry::symmetric_laue;
            else if (geo == "symmetric-bragg")
                spec.reflection.geometry = geom::CrystalGeometry::symmetric_bragg;
            else
                throw config_error("beamline." + id + ".geometry: expected symmetric-laue or symmetric-bragg");
            std::string pol = spec.reflection.polarization == geom::Polarization::pi ? "pi" : "sigma";
            r.get(id + ".polarization", pol);
            if (pol == "pi")
                spec.reflection.polarization = geom::Polarization::pi;
            else if (pol == "sigma")
                spec.reflection.polarization = geom::Polarization::sigma;
            else
                throw config_error("beamline." + id + ".polarization: expected pi or sigma");
            r.get(id + ".efficiency", spec.efficiency);
            r.get(id + ".sample_to_detector_m", spec.sample_to_detector_m);
            r.get(id + ".pixel_pitch_um", spec.pixel_pitch_um);
            specs.push_back(spec);
        }
        b.splitters = specs;
        auto& s = c.acq.sase;
        r.get("gamma_shape", s.gamma_shape);
        r.get("jitter_sigma_um", s.jitter_sigma_um);
        r.get("multi_peak_prob", s.multi_peak_prob);
        r.get("ghost_offset_um", s.ghost_offset_um);
        r.get("ghost_weight", s.ghost_weight);
        std::vector<std::string> prefixes;
        for (const auto& id : ids) prefixes.push_back(id + ".");
        r.reject_unknown(prefixes);
    }
    {
        detail::SectionReader r("phantom", ini.find("phantom"));
        auto& p = c.collision;
        r.get_vec3("a.center_um", p.droplet_a.center_um);
        r.get("a.radius_um", p.droplet_a.radius_um);
        r.get_vec3("a.velocity_mps", p.droplet_a.velocity_m_s);
        r.get_vec3("b.center_um", p.droplet_b.center_um);
        r.get("b.radius_um", p.droplet_b.radius_um);
        r.get_vec3("b.velocity_mps", p.droplet_b.velocity_m_s);
        if (auto v = r.raw("mu_water_per_cm")) {
            if (*v == "auto") {
                c.mu_water_auto = true;
            } else {
                c.mu_water_auto = false;
                p.mu_water_per_um = std::stod(*v) * 1e-4;
            }
        }
        r.get("merge_smoothness_um", p.merge_smoothness_um);
        r.get("coalescence_tau_us", p.coalescence_tau_us);
        r.get("boundary_width_um", p.boundary_width_um);
        r.get("rho_kg_m3", p.fluid.density_kg_m3);
        r.get("surface_tension_n_m", p.fluid.surface_tension_n_m);
        r.reject_unknown();
    }
    {
        detail::SectionReader r("detector", ini.find("detector"));
        auto& d = c.acq.detector;
        r.get("rows", d.height);
        r.get("cols", d.width);
        r.get("read_noise_sigma", d.read_noise_sigma);
        r.get("dark_level", d.dark_level);
        r.get("photon_scale", d.photon_scale);
        r.get("first_frame_noise_fraction", d.first_frame_noise_fraction);
        r.get("blur_sigma_px", d.blur_sigma_px);
        r.get("illum_sigma_frac", d.illum_sigma_frac);
        r.get("prnu_sigma", d.prnu_sigma);
        r.get("prnu_seed", d.prnu_seed);
        r.get("n_flats", c.acq.n_flats);
        r.get("n_darks", c.acq.n_darks);
        r.reject_unknown();
    }
    {
        detail::SectionReader r("preprocess", ini.find("preprocess"));
        auto& p = c.prep;
        r.get("n_components", p.flatfield.n_components);
        if (auto v = r.raw("downsample")) {
            const auto n = r.numbers("downsample", *v);
            if (n.size() != 2) throw config_error("preprocess.downsample: expected two integers");
            p.flatfield.downsample_y = static_cast<int>(n[0]);
            p.flatfield.downsample_x = static_cast<int>(n[1]);
        }
        r.get("background_percentile", p.flatfield.background_percentile);
        r.get("denominator_floor_frac", p.flatfield.denominator_floor_frac);
        r.get("cycle_spin_shifts", p.denoise.cycle_spin_shifts);
        r.get("tv_weight", p.denoise.tv_weight);
        r.get("tv_max_iter", p.denoise.tv_max_iter);
        r.get("tv_tol", p.denoise.tv_tol);
        r.get_list("register", c.register_views);
        r.get("mi_bins", p.registration.bins);
        r.get("pyramid_levels", p.registration.pyramid_levels);
        r.get("crop_size", p.harmonize.crop_size);
        if (auto v = r.raw("roi")) {
            if (*v == "auto") {
                c.roi_center.reset();
            } else {
                const auto n = r.numbers("roi", *v);
                if (n.size() != 2) throw config_error("preprocess.roi: expected auto or two numbers");
                c.roi_center = {{n[0], n[1]}};
            }
        }
        r.get("highpass_sigma", p.segment.highpass_sigma);
        r.get("canny_sigma", p.segment.canny_sigma);
        r.get("canny_low_pct", p.segment.low_percentile);
        r.get("canny_high_pct", p.segment.high_percentile);
        r.get("subtract_dark", p.subtract_dark);
        r.reject_unknown();
    }
    {
        detail::SectionReader r("train", ini.find("train"));
        auto& t = c.train;
        r.get("batch_size", t.batch_size);
        r.get("lr", t.lr);
        r.get("warmup_epochs", t.warmup_epochs);
        r.get("epochs", t.epochs);
        r.get("rays_per_view", t.rays_per_view);
        r.get("samples_per_ray", t.samples_per_ray);
        r.get("levels_space", t.levels_space);
        r.get("levels_time", t.levels_time);
        r.get("latent_dim", t.latent_dim);
        r.get_int_list("trunk_hidden", t.trunk_hidden);
        r.get_int_list("disc_channels", t.disc_channels);
        r.get("gan_weight", t.gan_weight);
        r.get("mask_bg_weight", t.mask_bg_weight);
        r.get("query_angle_half_range_deg", t.query_angle_half_range_deg);
        r.get("logit_cap", t.logit_cap);
        r.get("patch_scale_min", t.patch.scale_min);
        r.get("patch_scale_max", t.patch.scale_max);
        r.get("patch_stride_max", t.patch.stride_max);
        r.get("output_bias", t.output_bias);
        r.reject_unknown();
    }
    {
        detail::SectionReader r("io", ini.find("io"));
        auto& o = c.io;
        r.get("extract_n", o.extract_n);
        r.get("extract_sigma", o.extract_sigma);
        r.get("extract_downsample", o.extract_downsample);
        r.get("extract_count", o.extract_count);
        if (auto v = r.raw("iso_threshold_per_cm")) {
            if (*v == "auto")
                o.iso_threshold_per_um = -1.0;
            else
                o.iso_threshold_per_um = std::stod(*v) * 1e-4;
        }
        r.get_list("export", o.export_modes);
        if (auto v = r.raw("mip_axis")) {
            if (v->size() != 1 || (v->front() != 'x' && v->front() != 'y' && v->front() != 'z'))
                throw config_error("io.mip_axis: expected x, y or z");
            o.mip_axis = v->front();
        }
        r.get("memory_cap_mb", o.memory_cap_mb);
        r.get("volume_tile_points", o.volume_tile_points);
        r.reject_unknown();
    }
    c.resolve();
    return c;
}

inline Config parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

/// Apply one `section.key=value` override.
inline void apply_override(std::string& config_text, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    const size_t dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw usage_error("--set expects section.key=value, got '" + assignment + "'");
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string value = assignment.substr(eq + 1);
    config_text += "\n[" + section + "]\n" + key + " = " + value + "\n";
}

/// Canonical serialization; parse(serialize(parse(x))) == parse(x).
inline std::string serialize_config(const Config& c) {
    std::ostringstream out;
    out.precision(17);
    const auto& b = c.acq.beamline;
    out << "[beamline]\n";
    out << "photon_energy_kev = " << b.photon_energy_kev << "\n";
    out << "pulse_period_ns = " << b.pulse_period_ns << "\n";
    out << "camera_frame_period_ns = " << b.camera_frame_period_ns << "\n";
    out << "frames_per_train = " << b.frames_per_train << "\n";
    out << "air_path_m = " << b.air_path_m << "\n";
    out << "splitters = ";
    for (size_t i = 0; i < b.splitters.size(); ++i) out << (i ? "," : "") << b.splitters[i].id;
    out << "\n";
    for (const auto& s : b.splitters) {
        out << s.id << ".lattice_angstrom = " << s.reflection.lattice_constant_angstrom << "\n";
        out << s.id << ".hkl = " << s.reflection.hkl[0] << "," << s.reflection.hkl[1] << ","
            << s.reflection.hkl[2] << "\n";
        out << s.id << ".geometry = "
            << (s.reflection.geometry == geom::CrystalGeometry::symmetric_laue ? "symmetric-laue"
                                                                               : "symmetric-bragg")
            << "\n";
        out << s.id << ".polarization = "
            << (s.reflection.polarization == geom::Polarization::pi ? "pi" : "sigma") << "\n";
        out << s.id << ".efficiency = " << s.efficiency << "\n";
        out << s.id << ".sample_to_detector_m = " << s.sample_to_detector_m << "\n";
        out << s.id << ".pixel_pitch_um = " << s.pixel_pitch_um << "\n";
    }
    const auto& sase = c.acq.sase;
    out << "gamma_shape = " << sase.gamma_shape << "\n";
    out << "jitter_sigma_um = " << sase.jitter_sigma_um << "\n";
    out << "multi_peak_prob = " << sase.multi_peak_prob << "\n";
    out << "ghost_offset_um = " << sase.ghost_offset_um << "\n";
    out << "ghost_weight = " << sase.ghost_weight << "\n";

    const auto& p = c.collision;
    out << "\n[phantom]\n";
    out << "a.center_um = " << p.droplet_a.center_um.x << "," << p.droplet_a.center_um.y << ","
        << p.droplet_a.center_um.z << "\n";
    out << "a.radius_um = " << p.droplet_a.radius_um << "\n";
    out << "a.velocity_mps = " << p.droplet_a.velocity_m_s.x << "," << p.droplet_a.velocity_m_s.y
        << "," << p.droplet_a.velocity_m_s.z << "\n";
    out << "b.center_um = " << p.droplet_b.center_um.x << "," << p.droplet_b.center_um.y << ","
        << p.droplet_b.center_um.z << "\n";
    out << "b.radius_um = " << p.droplet_b.radius_um << "\n";
    out << "b.velocity_mps = " << p.droplet_b.velocity_m_s.x << "," << p.droplet_b.velocity_m_s.y
        << "," << p.droplet_b.velocity_m_s.z << "\n";
    if (c.mu_water_auto)
        out << "mu_water_per_cm = auto\n";
    else
        out << "mu_water_per_cm = " << p.mu_water_per_um * 1e4 << "\n";
    out << "merge_smoothness_um = " << p.merge_smoothness_um << "\n";
    out << "coalescence_tau_us = " << p.coalescence_tau_us << "\n";
    out << "boundary_width_um = " << p.boundary_width_um << "\n";
    out << "rho_kg_m3 = " << p.fluid.density_kg_m3 << "\n";
    out << "surface_tension_n_m = " << p.fluid.surface_tension_n_m << "\n";

    const auto& d = c.acq.detector;
    out << "\n[detector]\n";
    out << "rows = " << d.height << "\ncols = " << d.width << "\n";
    out << "read_noise_sigma = " << d.read_noise_sigma << "\n";
    out << "dark_level = " << d.dark_level << "\n";
    out << "photon_scale = " << d.photon_scale << "\n";
    out << "first_frame_noise_fraction = " << d.first_frame_noise_fraction << "\n";
    out << "blur_sigma_px = " << d.blur_sigma_px << "\n";
    out << "illum_sigma_frac = " << d.illum_sigma_frac << "\n";
    out << "prnu_sigma = " << d.prnu_sigma << "\n";
    out << "prnu_seed = " << d.prnu_seed << "\n";
    out << "n_flats = " << c.acq.n_flats << "\nn_darks = " << c.acq.n_darks << "\n";

    const auto& pr = c.prep;
    out << "\n[preprocess]\n";
    out << "n_components = " << pr.flatfield.n_components << "\n";
    out << "downsample = " << pr.flatfield.downsample_y << "," << pr.flatfield.downsample_x << "\n";
    out << "background_percentile = " << pr.flatfield.background_percentile << "\n";
    out << "denominator_floor_frac = " << pr.flatfield.denominator_floor_frac << "\n";
    out << "cycle_spin_shifts = " << pr.denoise.cycle_spin_shifts << "\n";
    out << "tv_weight = " << pr.denoise.tv_weight << "\n";
    out << "tv_max_iter = " << pr.denoise.tv_max_iter << "\n";
    out << "tv_tol = " << pr.denoise.tv_tol << "\n";
    out << "register = ";
    for (size_t i = 0; i < c.register_views.size(); ++i) out << (i ? "," : "") << c.register_views[i];
    out << "\n";
    out << "mi_bins = " << pr.registration.bins << "\n";
    out << "pyramid_levels = " << pr.registration.pyramid_levels << "\n";
    out << "crop_size = " << pr.harmonize.crop_size << "\n";
    if (c.roi_center)
        out << "roi = " << c.roi_center->first << "," << c.roi_center->second << "\n";
    else
        out << "roi = auto\n";
    out << "highpass_sigma = " << pr.segment.highpass_sigma << "\n";
    out << "canny_sigma = " << pr.segment.canny_sigma << "\n";
    out << "canny_low_pct = " << pr.segment.low_percentile << "\n";
    out << "canny_high_pct = " << pr.segment.high_percentile << "\n";
    out << "subtract_dark = " << (pr.subtract_dark ? "true" : "false") << "\n";

    const auto& t = c.train;
    out << "\n[train]\n";
    out << "batch_size = " << t.batch_size << "\nlr = " << t.lr << "\n";
    out << "warmup_epochs = " << t.warmup_epochs << "\nepochs = " << t.epochs << "\n";
    out << "rays_per_view = " << t.rays_per_view << "\n";
    out << "samples_per_ray = " << t.samples_per_ray << "\n";
    out << "levels_space = " << t.levels_space << "\nlevels_time = " << t.levels_time << "\n";
    out << "latent_dim = " << t.latent_dim << "\n";
    out << "trunk_hidden = ";
    for (size_t i = 0; i < t.trunk_hidden.size(); ++i) out << (i ? "," : "") << t.trunk_hidden[i];
    out << "\ndisc_channels = ";
    for (size_t i = 0; i < t.disc_channels.size(); ++i) out << (i ? "," : "") << t.disc_channels[i];
    out << "\n";
    out << "gan_weight = " << t.gan_weight << "\n";
    out << "mask_bg_weight = " << t.mask_bg_weight << "\n";
    out << "query_angle_half_range_deg = " << t.query_angle_half_range_deg << "\n";
    out << "logit_cap = " << t.logit_cap << "\n";
    out << "patch_scale_min = " << t.patch.scale_min << "\n";
    out << "patch_scale_max = " << t.patch.scale_max << "\n";
    out << "patch_stride_max = " << t.patch.stride_max << "\n";
    out << "output_bias = " << t.output_bias << "\n";

    const auto& o = c.io;
    out << "\n[io]\n";
    out << "extract_n = " << o.extract_n << "\n";
    out << "extract_sigma = " << o.extract_sigma << "\n";
    out << "extract_downsample = " << o.extract_downsample << "\n";
    out << "extract_count = " << o.extract_count << "\n";
    if (o.iso_threshold_per_um < 0)
        out << "iso_threshold_per_cm = auto\n";
    else
        out << "iso_threshold_per_cm = " << o.iso_threshold_per_um * 1e4 << "\n";
    out << "export = ";
    for (size_t i = 0; i < o.export_modes.size(); ++i) out << (i ? "," : "") << o.export_modes[i];
    out << "\n";
    out << "mip_axis = " << o.mip_axis << "\n";
    out << "memory_cap_mb = " << o.memory_cap_mb << "\n";
    out << "volume_tile_points = " << o.volume_tile_points << "\n";
    return out.str();
}

}  // namespace mproj::io
