#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"

namespace mproj::prep {

/// PCA flat-field model: mean flat plus orthonormal eigen-flats fitted at a
/// downsampled resolution (components are kept both downsampled, where they
/// are orthonormal, and upsampled for application).
struct FlatFieldBasis {
    ImageD mean_flat;                    // full resolution
    ImageD mean_ds;                      // downsampled mean
    std::vector<ImageD> components;      // downsampled, orthonormal
    std::vector<ImageD> components_full; // bilinear-upsampled to full resolution
    int downsample_y = 2;
    int downsample_x = 4;

    int n_components() const { return static_cast<int>(components.size()); }
};

struct FlatFieldOptions {
    int n_components = 7;
    int downsample_y = 2;
    int downsample_x = 4;
    double background_percentile = 70.0;  // coefficient fit uses pixels above this
    double denominator_floor_frac = 0.02; // of the mean flat level
    double degenerate_pixel_frac = 0.10;  // floored fraction that trips the error
};

/// Mean + truncated SVD of the mean-subtracted, block-downsampled flats.
inline FlatFieldBasis fit_flatfield_basis(const std::vector<ImageD>& flats,
                                          const FlatFieldOptions& opt = {}) {
    if (static_cast<int>(flats.size()) < opt.n_components + 1)
        throw usage_error("flat-field fit needs at least " + std::to_string(opt.n_components + 1) +
                          " flats for " + std::to_string(opt.n_components) + " components, got " +
                          std::to_string(flats.size()));
    for (const auto& f : flats)
        if (!f.same_shape(flats.front())) throw usage_error("flats must share one shape");

    FlatFieldBasis basis;
    basis.downsample_y = opt.downsample_y;
    basis.downsample_x = opt.downsample_x;
    const int h = flats.front().height, w = flats.front().width;
    basis.mean_flat = ImageD(h, w, 0.0);
    for (const auto& f : flats)
        for (size_t i = 0; i < f.data.size(); ++i) basis.mean_flat.data[i] += f.data[i];
    for (auto& v : basis.mean_flat.data) v /= static_cast<double>(flats.size());
    basis.mean_ds = block_downsample(basis.mean_flat, opt.downsample_y, opt.downsample_x);

    if (opt.n_components > 0) {
        const int hd = basis.mean_ds.height, wd = basis.mean_ds.width;
        Eigen::MatrixXd M(static_cast<int>(flats.size()), hd * wd);
        for (size_t i = 0; i < flats.size(); ++i) {
            const ImageD ds = block_downsample(flats[i], opt.downsample_y, opt.downsample_x);
            for (int j = 0; j < hd * wd; ++j) M(static_cast<int>(i), j) = ds.data[j] - basis.mean_ds.data[j];
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
        const int k = std::min<int>(opt.n_components, static_cast<int>(svd.matrixV().cols()));
        for (int c = 0; c < k; ++c) {
            ImageD comp(hd, wd);
            for (int j = 0; j < hd * wd; ++j) comp.data[j] = svd.matrixV()(j, c);
            basis.components_full.push_back(resize_bilinear(comp, h, w));
            basis.components.push_back(std::move(comp));
        }
    }
    return basis;
}

/// Divide the frame by this shot's illumination estimate: mean flat plus the
/// least-squares combination of eigen-flats fitted on bright (sample-free)
/// pixels. Returns a dimensionless transmission image.
inline ImageD flatfield_correct(const ImageD& frame, const FlatFieldBasis& basis,
                                const FlatFieldOptions& opt = {}) {
    if (!frame.same_shape(basis.mean_flat))
        throw usage_error("frame shape does not match the flat-field basis");

    const int k = basis.n_components();
    std::vector<double> coef(k, 0.0);
    if (k > 0) {
        const ImageD ds = block_downsample(frame, basis.downsample_y, basis.downsample_x);
        const double bg_cut = percentile(ds, opt.background_percentile);
        std::vector<int> bg;
        for (int j = 0; j < static_cast<int>(ds.data.size()); ++j)
            if (ds.data[j] >= bg_cut) bg.push_back(j);
        Eigen::MatrixXd A(bg.size(), k);
        Eigen::VectorXd b(bg.size());
        for (size_t r = 0; r < bg.size(); ++r) {
            b(static_cast<int>(r)) = ds.data[bg[r]] - basis.mean_ds.data[bg[r]];
            for (int c = 0; c < k; ++c) A(static_cast<int>(r), c) = basis.components[c].data[bg[r]];
        }
        const Eigen::VectorXd x = (A.transpose() * A).ldlt().solve(A.transpose() * b);
        for (int c = 0; c < k; ++c) coef[c] = x(c);
    }

    const double floor =
        std::max(opt.denominator_floor_frac * std::abs(mean_value(basis.mean_flat)), 1e-12);
    ImageD out(frame.height, frame.width);
    size_t floored = 0;
    for (size_t i = 0; i < frame.data.size(); ++i) {
        double denom = basis.mean_flat.data[i];
        for (int c = 0; c < k; ++c) denom += coef[c] * basis.components_full[c].data[i];
        if (denom < floor) {
            denom = floor;
            ++floored;
        }
        out.data[i] = frame.data[i] / denom;
    }
    if (static_cast<double>(floored) > opt.degenerate_pixel_frac * static_cast<double>(frame.data.size()))
        throw stage_error("degenerate flat: denominator below floor on " + std::to_string(floored) +
                          " of " + std::to_string(frame.data.size()) + " pixels");
    return out;
}

}  // namespace mproj::prep
