#include "eirm/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "eirm/error.hpp"

namespace eirm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, int& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

void SurveyConfig::validate() const {
  if (response_max <= response_min) {
    throw ValidationError(fmt::format("survey config: response_max ({}) must exceed response_min ({})",
                                      response_max, response_min));
  }
}

SurveyConfig SurveyConfig::from_json(const nlohmann::json& j) {
  SurveyConfig c;
  try {
    c.response_min = j.at("response_min").get<int>();
    c.response_max = j.at("response_max").get<int>();
    c.reverse_code_negative = j.value("reverse_code_negative", c.reverse_code_negative);
    c.survey_name = j.value("survey_name", c.survey_name);
    c.person_column = j.value("person_column", c.person_column);
    c.item_column = j.value("item_column", c.item_column);
    c.response_column = j.value("response_column", c.response_column);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("survey config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json SurveyConfig::to_json() const {
  return {{"survey_name", survey_name},
          {"response_min", response_min},
          {"response_max", response_max},
          {"reverse_code_negative", reverse_code_negative},
          {"person_column", person_column},
          {"item_column", item_column},
          {"response_column", response_column}};
}

SurveyConfig read_survey_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return SurveyConfig::from_json(j);
}

std::vector<double> ItemDesign::covariate(std::string_view name) const {
  std::vector<double> out;
  out.reserve(items.size());
  if (name == "negative") {
    for (const auto& it : items) out.push_back(it.negative ? 1.0 : 0.0);
    return out;
  }
  if (name == "position") {
    for (const auto& it : items) out.push_back(static_cast<double>(it.position));
    return out;
  }
  auto pos = std::find(extra_names.begin(), extra_names.end(), name);
  if (pos == extra_names.end()) {
    throw ValidationError(fmt::format("unknown item covariate '{}'", name));
  }
  auto col = static_cast<std::size_t>(pos - extra_names.begin());
  for (const auto& it : items) out.push_back(it.extra[col]);
  return out;
}

bool ItemDesign::has_covariate(std::string_view name) const {
  return name == "negative" || name == "position" ||
         std::find(extra_names.begin(), extra_names.end(), name) != extra_names.end();
}

void ItemDesign::add_covariate(const std::string& name, const std::vector<double>& values) {
  if (values.size() != items.size()) {
    throw ValidationError(fmt::format("covariate '{}' has {} values for {} items", name,
                                      values.size(), items.size()));
  }
  auto pos = std::find(extra_names.begin(), extra_names.end(), name);
  if (pos != extra_names.end()) {
    auto col = static_cast<std::size_t>(pos - extra_names.begin());
    for (std::size_t i = 0; i < items.size(); ++i) items[i].extra[col] = values[i];
    return;
  }
  extra_names.push_back(name);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].extra.push_back(values[i]);
}

ItemDesign parse_items(const csv::Table& items, std::string_view items_source,
                       std::vector<std::string>* warnings) {
  const int c_id = items.require_column("item_id", items_source);
  const int c_neg = items.require_column("negative", items_source);
  const int c_pos = items.require_column("position", items_source);
  const int c_text = items.column("text");
  std::vector<int> extra_cols;
  for (std::size_t c = 0; c < items.header.size(); ++c) {
    int ci = static_cast<int>(c);
    if (ci == c_id || ci == c_neg || ci == c_pos || ci == c_text) continue;
    bool numeric = !items.rows.empty();
    for (const auto& row : items.rows) {
      double v;
      if (!parse_double(row[c], v)) {
        numeric = false;
        break;
      }
    }
    if (numeric) {
      extra_cols.push_back(ci);
    } else {
      if (warnings) warnings->push_back(fmt::format("{}: ignoring non-numeric column '{}'", items_source,
                                         items.header[c]));
    }
  }

  std::vector<ItemInfo> all_items;
  std::unordered_set<std::string> ids;
  std::set<int> positions;
  for (std::size_t r = 0; r < items.rows.size(); ++r) {
    const auto& row = items.rows[r];
    const std::size_t line = r + 2;
    ItemInfo info;
    info.id = std::string(trim(row[c_id]));
    if (info.id.empty()) {
      throw ValidationError(fmt::format("{}: line {}: empty item_id", items_source, line));
    }
    int neg;
    if (!parse_int(row[c_neg], neg) || (neg != 0 && neg != 1)) {
      throw ValidationError(
          fmt::format("{}: line {}: negative must be 0 or 1, got '{}'", items_source, line, row[c_neg]));
    }
    info.negative = neg == 1;
    if (!parse_int(row[c_pos], info.position) || info.position < 1) {
      throw ValidationError(fmt::format("{}: line {}: position must be an integer >= 1, got '{}'",
                                        items_source, line, row[c_pos]));
    }
    if (!positions.insert(info.position).second) {
      throw ValidationError(
          fmt::format("{}: line {}: duplicate position {}", items_source, line, info.position));
    }
    if (c_text >= 0) info.text = row[c_text];
    for (int c : extra_cols) {
      double v = 0.0;
      parse_double(row[c], v);
      info.extra.push_back(v);
    }
    if (!ids.insert(info.id).second) {
      throw ValidationError(
          fmt::format("{}: line {}: duplicate item_id '{}'", items_source, line, info.id));
    }
    all_items.push_back(std::move(info));
  }

  ItemDesign design;
  for (int c : extra_cols) design.extra_names.push_back(items.header[static_cast<std::size_t>(c)]);
  design.items = std::move(all_items);
  return design;
}

Dataset ingest(const csv::Table& responses, const csv::Table& items, const SurveyConfig& config,
               std::string_view responses_source, std::string_view items_source) {
  config.validate();
  Dataset out;

  // Items file, in file order.
  ItemDesign parsed = parse_items(items, items_source, &out.warnings);
  std::vector<ItemInfo>& all_items = parsed.items;
  std::unordered_map<std::string, std::size_t> item_lookup;
  for (std::size_t i = 0; i < all_items.size(); ++i) item_lookup.emplace(all_items[i].id, i);

  // Responses file.
  const int c_person = responses.require_column(config.person_column, responses_source);
  const int c_item = responses.require_column(config.item_column, responses_source);
  const int c_resp = responses.require_column(config.response_column, responses_source);

  struct RawRecord {
    int person;
    std::size_t item;
    int value;
  };
  std::vector<RawRecord> raw;
  raw.reserve(responses.rows.size());
  std::unordered_map<std::string, int> person_lookup;
  std::vector<std::string> person_ids;
  std::set<std::pair<int, std::size_t>> seen;
  for (std::size_t r = 0; r < responses.rows.size(); ++r) {
    const auto& row = responses.rows[r];
    const std::size_t line = r + 2;
    std::string pid(trim(row[c_person]));
    std::string iid(trim(row[c_item]));
    auto it = item_lookup.find(iid);
    if (it == item_lookup.end()) {
      throw ValidationError(
          fmt::format("{}: line {}: unknown item_id '{}'", responses_source, line, iid));
    }
    int value;
    if (!parse_int(row[c_resp], value)) {
      throw ValidationError(fmt::format("{}: line {}: response '{}' is not an integer",
                                        responses_source, line, row[c_resp]));
    }
    if (value < config.response_min || value > config.response_max) {
      throw ValidationError(fmt::format("{}: line {}: response {} outside [{}, {}]", responses_source,
                                        line, value, config.response_min, config.response_max));
    }
    auto [pit, inserted] = person_lookup.emplace(pid, static_cast<int>(person_ids.size()));
    if (inserted) person_ids.push_back(pid);
    if (!seen.emplace(pit->second, it->second).second) {
      throw ValidationError(fmt::format("{}: line {}: duplicate response for person '{}', item '{}'",
                                        responses_source, line, pid, iid));
    }
    raw.push_back({pit->second, it->second, value});
  }

  // Keep items with responses, ordered by position.
  std::vector<std::size_t> present(all_items.size(), 0);
  for (const auto& rec : raw) ++present[rec.item];
  std::vector<std::size_t> order(all_items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return all_items[a].position < all_items[b].position;
  });
  std::vector<int> new_index(all_items.size(), -1);
  ItemDesign design;
  design.n_categories = config.n_categories();
  design.extra_names = parsed.extra_names;
  for (std::size_t src : order) {
    if (present[src] == 0) {
      out.warnings.push_back(
          fmt::format("item '{}' has no responses and was dropped", all_items[src].id));
      continue;
    }
    new_index[src] = static_cast<int>(design.items.size());
    design.items.push_back(all_items[src]);
  }

  ResponseTable table;
  table.survey_name = config.survey_name;
  table.scale = {config.response_min, config.response_max};
  table.raw_min = config.response_min;
  table.person_ids = std::move(person_ids);
  for (const auto& it : design.items) table.item_ids.push_back(it.id);
  table.records.reserve(raw.size());
  for (const auto& rec : raw) table.records.push_back({rec.person, new_index[rec.item], rec.value});

  out.table = std::move(table);
  out.design = std::move(design);
  return out;
}

Dataset ingest(const std::filesystem::path& responses_csv, const std::filesystem::path& items_csv,
               const SurveyConfig& config) {
  auto responses = csv::read_file(responses_csv);
  auto items = csv::read_file(items_csv);
  return ingest(responses, items, config, responses_csv.string(), items_csv.string());
}

ResponseTable reverse_code(const ResponseTable& table, const ItemDesign& design,
                           const SurveyConfig& config) {
  if (table.category_scale) {
    throw ValidationError("reverse_code expects raw responses, not categories");
  }
  if (design.size() != table.n_items()) {
    throw ValidationError("reverse_code: item design does not match table");
  }
  ResponseTable out = table;
  const int flip = config.response_min + config.response_max;
  for (auto& rec : out.records) {
    if (rec.value < config.response_min || rec.value > config.response_max) {
      throw ValidationError(fmt::format("reverse_code: response {} outside declared bounds", rec.value));
    }
    if (design.items[rec.item].negative) rec.value = flip - rec.value;
  }
  return out;
}

ResponseTable to_categories(const ResponseTable& table, const SurveyConfig& config) {
  if (table.category_scale) return table;
  ResponseTable out = table;
  for (auto& rec : out.records) rec.value = rec.value - config.response_min + 1;
  out.scale = {1, config.n_categories()};
  out.raw_min = config.response_min;
  out.category_scale = true;
  return out;
}

ResponseTable to_raw(const ResponseTable& table) {
  if (!table.category_scale) return table;
  ResponseTable out = table;
  for (auto& rec : out.records) rec.value = rec.value + table.raw_min - 1;
  out.scale = {table.raw_min, table.raw_min + table.scale.max - 1};
  out.category_scale = false;
  return out;
}

ResponseTable prepare_for_model(const ResponseTable& raw, const ItemDesign& design,
                                const SurveyConfig& config) {
  if (config.reverse_code_negative) return to_categories(reverse_code(raw, design, config), config);
  return to_categories(raw, config);
}

Subset select_persons(const ResponseTable& table, const ItemDesign& design,
                      const std::vector<int>& keep_persons) {
  std::vector<int> person_map(table.n_persons(), -1);
  Subset out;
  out.table.survey_name = table.survey_name;
  out.table.scale = table.scale;
  out.table.raw_min = table.raw_min;
  out.table.category_scale = table.category_scale;
  for (int p : keep_persons) {
    if (p < 0 || static_cast<std::size_t>(p) >= table.n_persons()) {
      throw ValidationError("select_persons: person index out of range");
    }
    if (person_map[p] >= 0) continue;
    person_map[p] = static_cast<int>(out.table.person_ids.size());
    out.table.person_ids.push_back(table.person_ids[p]);
  }
  std::vector<std::size_t> item_count(table.n_items(), 0);
  for (const auto& rec : table.records) {
    if (person_map[rec.person] >= 0) ++item_count[rec.item];
  }
  std::vector<int> item_map(table.n_items(), -1);
  out.design.extra_names = design.extra_names;
  out.design.n_categories = design.n_categories;
  for (std::size_t i = 0; i < table.n_items(); ++i) {
    if (item_count[i] == 0) continue;
    item_map[i] = static_cast<int>(out.table.item_ids.size());
    out.table.item_ids.push_back(table.item_ids[i]);
    out.design.items.push_back(design.items[i]);
  }
  for (const auto& rec : table.records) {
    if (person_map[rec.person] < 0) continue;
    out.table.records.push_back({person_map[rec.person], item_map[rec.item], rec.value});
  }
  return out;
}

csv::Table wide_to_long(const csv::Table& wide, std::string_view person_column) {
  const int c_person = wide.require_column(person_column, "wide table");
  csv::Table out;
  out.header = {"person_id", "item_id", "response"};
  for (const auto& row : wide.rows) {
    for (std::size_t c = 0; c < wide.header.size(); ++c) {
      if (static_cast<int>(c) == c_person) continue;
      if (trim(row[c]).empty()) continue;
      out.rows.push_back({row[c_person], wide.header[c], std::string(trim(row[c]))});
    }
  }
  return out;
}

void write_responses_csv(const ResponseTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  csv::Writer w(out);
  w.row({"person_id", "item_id", "response"});
  for (const auto& rec : table.records) {
    w.row({table.person_ids[rec.person], table.item_ids[rec.item], std::to_string(rec.value)});
  }
}

void write_items_csv(const ItemDesign& design, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  csv::Writer w(out);
  std::vector<std::string> header = {"item_id", "negative", "position", "text"};
  for (const auto& n : design.extra_names) header.push_back(n);
  w.row(header);
  for (const auto& it : design.items) {
    std::vector<std::string> row = {it.id, it.negative ? "1" : "0", std::to_string(it.position), it.text};
    for (double v : it.extra) row.push_back(csv::format_double(v));
    w.row(row);
  }
}

}  // namespace eirm
