#include "eirm/draws_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "eirm/analysis.hpp"
#include "eirm/csv.hpp"
#include "eirm/diagnostics.hpp"
#include "eirm/error.hpp"

namespace eirm {

namespace {

constexpr char kMagic[8] = {'E', 'I', 'R', 'T', 'D', 'R', 'A', 'W'};
constexpr std::uint32_t kVersion = 1;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(T));
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put_le(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <class T>
  T get() {
    unsigned char bytes[sizeof(T)];
    read(reinterpret_cast<char*>(bytes), sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) throw ValidationError(fmt::format("{}: implausible name length {}", source_, n));
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ValidationError(fmt::format("{}: truncated draws file", source_));
  }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace

void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "chain,iteration,parameter,value\n";
  std::vector<std::string> names;
  for (const auto& n : draws.names) names.push_back(csv::escape(n));
  for (int c = 0; c < draws.n_chains; ++c) {
    for (int i = 0; i < draws.n_samples; ++i) {
      const auto row = draws.draw(c, i);
      for (std::size_t p = 0; p < row.size(); ++p) {
        out << c + 1 << ',' << i + 1 << ',' << names[p] << ',' << csv::format_double(row[p]) << '\n';
      }
    }
  }
}

void write_draws_binary(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out.write(kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(draws.n_chains));
  put_le(out, static_cast<std::uint32_t>(draws.n_samples));
  put_le(out, static_cast<std::uint32_t>(draws.n_params()));
  for (const auto& n : draws.names) put_string(out, n);
  put_le(out, static_cast<std::uint32_t>(draws.blocks.size()));
  for (const auto& b : draws.blocks) {
    put_string(out, b.name);
    put_le(out, static_cast<std::uint64_t>(b.offset));
    put_le(out, static_cast<std::uint64_t>(b.size));
  }
  for (double v : draws.values) put_f64(out, v);
  for (const auto& t : draws.info) {
    put_le(out, static_cast<std::uint8_t>(t.divergent ? 1 : 0));
    put_le(out, static_cast<std::uint32_t>(t.n_leapfrog));
    put_le(out, static_cast<std::uint32_t>(t.tree_depth));
    put_f64(out, t.energy);
    put_f64(out, t.accept_stat);
    put_f64(out, t.step_size);
  }
  if (!out) throw ValidationError(fmt::format("error writing '{}'", path.string()));
}

PosteriorDraws read_draws_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  Reader r(in, path.string());
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError(fmt::format("{}: not a draws file (bad magic)", path.string()));
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw ValidationError(fmt::format("{}: unsupported draws version {}", path.string(), version));
  PosteriorDraws d;
  d.n_chains = static_cast<int>(r.get<std::uint32_t>());
  d.n_samples = static_cast<int>(r.get<std::uint32_t>());
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t p = 0; p < n_params; ++p) d.names.push_back(r.string());
  const auto n_blocks = r.get<std::uint32_t>();
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    ParameterBlock block;
    block.name = r.string();
    block.offset = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    block.size = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    d.blocks.push_back(std::move(block));
  }
  const std::size_t n_draws = static_cast<std::size_t>(d.n_chains) * static_cast<std::size_t>(d.n_samples);
  d.values.resize(n_draws * n_params);
  for (double& v : d.values) v = r.f64();
  d.info.resize(n_draws);
  for (auto& t : d.info) {
    t.divergent = r.get<std::uint8_t>() != 0;
    t.n_leapfrog = static_cast<int>(r.get<std::uint32_t>());
    t.tree_depth = static_cast<int>(r.get<std::uint32_t>());
    t.energy = r.f64();
    t.accept_stat = r.f64();
    t.step_size = r.f64();
  }
  return d;
}

void write_sampler_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"chain", "iteration", "divergent", "n_leapfrog", "tree_depth", "energy", "accept_stat", "step_size"});
  for (int c = 0; c < draws.n_chains; ++c) {
    for (int i = 0; i < draws.n_samples; ++i) {
      const auto& t = draws.info[static_cast<std::size_t>(c) * draws.n_samples + i];
      w.row({std::to_string(c + 1), std::to_string(i + 1), t.divergent ? "1" : "0", std::to_string(t.n_leapfrog),
             std::to_string(t.tree_depth), csv::format_double(t.energy), csv::format_double(t.accept_stat),
             csv::format_double(t.step_size)});
    }
  }
}

std::vector<ItemPrediction> predict_item_params(const PosteriorDraws& draws, const ModelSpec& spec,
                                                const ItemDesign& design) {
  const std::size_t n_items = design.size();
  if (n_items == 0) throw ValidationError("predict: no items");
  auto need = [&](std::string_view name) -> const ParameterBlock& {
    const ParameterBlock* b = draws.block(name);
    if (b == nullptr) throw ValidationError(fmt::format("predict: draws have no '{}' block", name));
    return *b;
  };
  auto check_items = [&](const ParameterBlock& b, Eigen::Index expected) {
    if (b.size != expected) {
      throw ValidationError(fmt::format("predict: block '{}' has {} entries, expected {}", b.name, b.size, expected));
    }
  };
  const auto I = static_cast<Eigen::Index>(n_items);

  const bool has_disc = spec.has_disc_effects();
  Eigen::MatrixXd x_disc;
  const ParameterBlock* gamma = nullptr;
  const ParameterBlock* zeta1 = nullptr;
  if (has_disc) {
    gamma = &need("gamma");
    zeta1 = &need("zeta1");
    check_items(*zeta1, I);
    x_disc.resize(I, static_cast<Eigen::Index>(spec.disc_covariates.size()) + 1);
    x_disc.col(0).setOnes();
    for (std::size_t c = 0; c < spec.disc_covariates.size(); ++c) {
      const auto col = design.covariate(spec.disc_covariates[c]);
      for (Eigen::Index i = 0; i < I; ++i) x_disc(i, static_cast<Eigen::Index>(c) + 1) = col[static_cast<std::size_t>(i)];
    }
    check_items(*gamma, x_disc.cols());
  }

  const bool free = spec.family == Family::grm_free_threshold;
  Eigen::MatrixXd x_loc;
  const ParameterBlock* beta = nullptr;
  const ParameterBlock* zeta0 = nullptr;
  const ParameterBlock* alpha = nullptr;
  Eigen::Index n_cut = 0;
  if (free) {
    alpha = &need("alpha");
    if (alpha->size % I != 0) throw ValidationError("predict: threshold block does not match the item count");
    n_cut = alpha->size / I;
  } else {
    beta = &need("beta");
    zeta0 = &need("zeta0");
    check_items(*zeta0, I);
    const bool intercept = spec.has_location_intercept();
    x_loc.resize(I, static_cast<Eigen::Index>(spec.location_covariates.size()) + (intercept ? 1 : 0));
    Eigen::Index c0 = 0;
    if (intercept) x_loc.col(c0++).setOnes();
    for (std::size_t c = 0; c < spec.location_covariates.size(); ++c) {
      const auto col = design.covariate(spec.location_covariates[c]);
      for (Eigen::Index i = 0; i < I; ++i) x_loc(i, c0 + static_cast<Eigen::Index>(c)) = col[static_cast<std::size_t>(i)];
    }
    check_items(*beta, x_loc.cols());
  }

  const std::size_t n_draws = static_cast<std::size_t>(draws.n_chains) * static_cast<std::size_t>(draws.n_samples);
  if (n_draws == 0) throw ValidationError("predict: no draws");
  std::vector<std::vector<double>> log_a(n_items, std::vector<double>(n_draws, 0.0));
  std::vector<std::vector<double>> b(n_items, std::vector<double>(n_draws, 0.0));
  std::size_t d = 0;
  for (int c = 0; c < draws.n_chains; ++c) {
    for (int it = 0; it < draws.n_samples; ++it, ++d) {
      const auto v = draws.draw(c, it);
      for (Eigen::Index i = 0; i < I; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (has_disc) {
          double eta = v[static_cast<std::size_t>(zeta1->offset + i)];
          for (Eigen::Index k = 0; k < x_disc.cols(); ++k) eta += x_disc(i, k) * v[static_cast<std::size_t>(gamma->offset + k)];
          log_a[si][d] = eta;
        }
        if (free) {
          double s = 0.0;
          for (Eigen::Index k = 0; k < n_cut; ++k) s += v[static_cast<std::size_t>(alpha->offset + i * n_cut + k)];
          b[si][d] = -s / static_cast<double>(n_cut);
        } else {
          double loc = v[static_cast<std::size_t>(zeta0->offset + i)];
          for (Eigen::Index k = 0; k < x_loc.cols(); ++k) loc += x_loc(i, k) * v[static_cast<std::size_t>(beta->offset + k)];
          b[si][d] = loc;
        }
      }
    }
  }

  std::vector<ItemPrediction> out;
  for (std::size_t i = 0; i < n_items; ++i) {
    ItemPrediction row;
    row.item_id = design.items[i].id;
    row.position = design.items[i].position;
    row.negative = design.items[i].negative;
    std::sort(log_a[i].begin(), log_a[i].end());
    // Quantiles of ln a, then exponentiated, so endpoints commute with exp.
    row.a_median = std::exp(quantile_sorted(log_a[i], 0.5));
    row.a_lower = std::exp(quantile_sorted(log_a[i], 0.025));
    row.a_upper = std::exp(quantile_sorted(log_a[i], 0.975));
    std::sort(b[i].begin(), b[i].end());
    row.b_median = quantile_sorted(b[i], 0.5);
    row.b_lower = quantile_sorted(b[i], 0.025);
    row.b_upper = quantile_sorted(b[i], 0.975);
    out.push_back(std::move(row));
  }
  return out;
}

void write_predictions_csv(const std::vector<ItemPrediction>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"item_id", "position", "framing", "a_median", "a_lower95", "a_upper95", "b_median", "b_lower95", "b_upper95"});
  for (const auto& r : rows) {
    w.row({r.item_id, std::to_string(r.position), std::string(framing_label(r.negative)), csv::format_double(r.a_median),
           csv::format_double(r.a_lower), csv::format_double(r.a_upper), csv::format_double(r.b_median),
           csv::format_double(r.b_lower), csv::format_double(r.b_upper)});
  }
}

}  // namespace eirm
