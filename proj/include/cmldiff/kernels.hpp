#pragma once

// Data-parallel lattice kernels. The functions in `kernels` are the OpenMP
// versions used by the library; `kernels::reference` holds plain serial
// implementations written independently, kept for tests and benchmarks.
// Every parallel kernel computes each output site from the previous-time
// input only, so results are bit-identical for any thread count.

#include <span>

#include "cmldiff/lattice.hpp"

namespace cmldiff::kernels {

/// theta(t+1) values for every site.
void theta_step(const ThetaField& in, const LocalChaoticMap& map, std::span<double> out);

/// Column stencils p_t(y + s, y) for every site y, width 2d+1, slot 0 = retention.
void assemble_stencil(const ThetaField& theta, const CurrentModel& model, std::span<double> stencil);

/// out(x) = sum_y p(x, y) in(y) as a gather over neighbouring columns.
void apply_stencil(const Geometry& geo, std::span<const double> stencil, std::span<const double> in,
                   std::span<double> out);

namespace reference {

void theta_step(const ThetaField& in, const LocalChaoticMap& map, std::span<double> out);
void assemble_stencil(const ThetaField& theta, const CurrentModel& model, std::span<double> stencil);
/// Scatter form: every column y pushes its mass to its neighbours.
void apply_stencil(const Geometry& geo, std::span<const double> stencil, std::span<const double> in,
                   std::span<double> out);

}  // namespace reference
}  // namespace cmldiff::kernels
