#pragma once

#include <cmath>
#include <vector>

#include "mproj/forward/projector.hpp"
#include "mproj/phantom/field4d.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::recon {

struct TimePointMetrics {
    double t_ns = 0.0;
    double iou = 0.0;
    double volume_error_percent = 0.0;
    double measured_view_psnr_db = 0.0;   // only when stacks are provided
    double heldout_view_psnr_db = 0.0;    // only when a truth field is provided
};

struct EvaluationReport {
    std::vector<TimePointMetrics> per_time;
    double mean_iou = 0.0;
    double min_iou = 0.0;
};

inline double psnr_db(const ImageD& a, const ImageD& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw usage_error("psnr needs equal shapes");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return 200.0;  // identical images
    return 10.0 * std::log10(peak * peak / mse);
}

/// Voxel-count IoU of thresholded grids at one time index.
inline double thresholded_iou(const phantom::GriddedField& a, int ta, const phantom::GriddedField& b,
                              int tb, double threshold) {
    if (a.n != b.n) throw usage_error("IoU grids must match");
    int64_t inter = 0, uni = 0;
    for (int z = 0; z < a.n; ++z)
        for (int y = 0; y < a.n; ++y)
            for (int x = 0; x < a.n; ++x) {
                const bool va = a.at(ta, z, y, x) > threshold;
                const bool vb = b.at(tb, z, y, x) > threshold;
                inter += va && vb;
                uni += va || vb;
            }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Compare a reconstruction against ground truth grids (matching shape and
/// timestamps). The threshold for the IoU/volume is half the truth's peak.
inline EvaluationReport evaluate_reconstruction(const phantom::GriddedField& recon,
                                                const phantom::GriddedField& truth) {
    if (recon.n != truth.n || recon.times_ns.size() != truth.times_ns.size())
        throw usage_error("reconstruction/truth grid mismatch: " + std::to_string(recon.n) + "^3 x " +
                          std::to_string(recon.times_ns.size()) + " vs " + std::to_string(truth.n) +
                          "^3 x " + std::to_string(truth.times_ns.size()));
    float peak = 0.0f;
    for (float v : truth.values) peak = std::max(peak, v);
    const double threshold = 0.5 * peak;

    EvaluationReport report;
    double iou_sum = 0.0, iou_min = 1.0;
    for (size_t t = 0; t < recon.times_ns.size(); ++t) {
        TimePointMetrics m;
        m.t_ns = recon.times_ns[t];
        m.iou = thresholded_iou(recon, static_cast<int>(t), truth, static_cast<int>(t), threshold);
        int64_t vr = 0, vt = 0;
        for (int z = 0; z < recon.n; ++z)
            for (int y = 0; y < recon.n; ++y)
                for (int x = 0; x < recon.n; ++x) {
                    vr += recon.at(static_cast<int>(t), z, y, x) > threshold;
                    vt += truth.at(static_cast<int>(t), z, y, x) > threshold;
                }
        m.volume_error_percent = vt == 0 ? 0.0 : 100.0 * (static_cast<double>(vr) - vt) / vt;
        report.per_time.push_back(m);
        iou_sum += m.iou;
        iou_min = std::min(iou_min, m.iou);
    }
    report.mean_iou = report.per_time.empty() ? 0.0 : iou_sum / report.per_time.size();
    report.min_iou = report.per_time.empty() ? 0.0 : iou_min;
    return report;
}

}  // namespace mproj::recon
