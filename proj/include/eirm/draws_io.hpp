#pragma once

#include <filesystem>
#include <vector>

#include "eirm/data.hpp"
#include "eirm/model_spec.hpp"
#include "eirm/sampler.hpp"

namespace eirm {

// Long CSV: chain,iteration,parameter,value (chain and iteration 1-based).
void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path);

// Binary layout, all integers and floats little-endian:
//   8 bytes  "EIRTDRAW"
//   u32      version (1)
//   u32      n_chains, u32 n_samples, u32 n_params
//   n_params x (u32 byte length, UTF-8 name)
//   u32      n_blocks, then n_blocks x (u32 length, name, u64 offset, u64 size)
//   f64      values in [chain][iteration][parameter] order
//   per draw: u8 divergent, u32 n_leapfrog, u32 tree_depth,
//             f64 energy, f64 accept_stat, f64 step_size
void write_draws_binary(const PosteriorDraws& draws, const std::filesystem::path& path);
PosteriorDraws read_draws_binary(const std::filesystem::path& path);

// chain,iteration,divergent,n_leapfrog,tree_depth,energy,accept_stat,step_size
void write_sampler_csv(const PosteriorDraws& draws, const std::filesystem::path& path);

struct ItemPrediction {
  std::string item_id;
  int position = 0;
  bool negative = false;
  double a_median = 0.0, a_lower = 0.0, a_upper = 0.0;
  double b_median = 0.0, b_lower = 0.0, b_upper = 0.0;
};

// Posterior median and central 95% interval of each item's discrimination
// a_i = exp(gamma . x_i + zeta1_i) and location b_i. For free thresholds,
// b_i is minus the mean of the item's cutpoints.
std::vector<ItemPrediction> predict_item_params(const PosteriorDraws& draws, const ModelSpec& spec,
                                                const ItemDesign& design);

// item_id,position,framing,a_median,a_lower95,a_upper95,b_median,b_lower95,b_upper95
void write_predictions_csv(const std::vector<ItemPrediction>& rows, const std::filesystem::path& path);

}  // namespace eirm
