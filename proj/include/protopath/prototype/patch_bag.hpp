#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"

namespace protopath::prototype {

using ad::NdArray;

/// Patch features of one slide (or one patient after concatenation).
struct PatchBag {
    std::string patient_id;
    std::string slide_id;
    NdArray features; // N x D
    std::vector<std::pair<double, double>> coords;
    /// Slide of origin per patch; filled by concatenate().
    std::vector<std::string> patch_slide;

    std::size_t size() const { return features.empty() ? 0 : features.rows(); }
    std::size_t dim() const { return features.empty() ? 0 : features.cols(); }

    void validate() const {
        if (features.rank() != 2 || features.rows() == 0) throw InputError("patch bag " + slide_id + " is empty");
        if (coords.size() != features.rows())
            throw AlignmentError("patch bag " + slide_id + ": coordinate count differs from feature rows");
        if (!features.all_finite()) throw InputError("patch bag " + slide_id + " has non-finite features");
        if (!patch_slide.empty() && patch_slide.size() != features.rows())
            throw AlignmentError("patch bag " + slide_id + ": slide labels differ from feature rows");
    }

    const std::string& slide_of(std::size_t n) const { return patch_slide.empty() ? slide_id : patch_slide[n]; }
};

/// Joins a patient's slides into one patient-level bag, in the given order.
inline PatchBag concatenate(const std::vector<PatchBag>& slides) {
    if (slides.empty()) throw InputError("no slides to concatenate");
    PatchBag out;
    out.patient_id = slides.front().patient_id;
    out.slide_id = slides.front().slide_id;
    const std::size_t d = slides.front().dim();
    std::size_t n = 0;
    for (const auto& s : slides) {
        s.validate();
        if (s.dim() != d) throw DimensionError("slides of patient " + out.patient_id + " differ in feature dim");
        if (s.patient_id != out.patient_id) throw AlignmentError("concatenating slides of different patients");
        n += s.size();
    }
    out.features = NdArray({n, d});
    std::size_t row = 0;
    for (const auto& s : slides) {
        std::copy(s.features.values().begin(), s.features.values().end(), out.features.data().begin() + row * d);
        for (std::size_t i = 0; i < s.size(); ++i) {
            out.coords.push_back(s.coords[i]);
            out.patch_slide.push_back(s.slide_of(i));
        }
        row += s.size();
    }
    return out;
}

} // namespace protopath::prototype
