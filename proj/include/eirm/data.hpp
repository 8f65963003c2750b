#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eirm/csv.hpp"

namespace eirm {

// Declared response bounds and column names for one survey.
struct SurveyConfig {
  std::string survey_name;
  int response_min = 1;
  int response_max = 4;
  bool reverse_code_negative = true;
  std::string person_column = "person_id";
  std::string item_column = "item_id";
  std::string response_column = "response";

  int n_categories() const { return response_max - response_min + 1; }
  void validate() const;

  static SurveyConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Response {
  int person = 0;
  int item = 0;
  int value = 0;
  bool operator==(const Response&) const = default;
};

// Inclusive bounds of the values stored in a ResponseTable.
struct ResponseScale {
  int min = 1;
  int max = 4;
  bool operator==(const ResponseScale&) const = default;
};

// Long-format person x item responses. Missing cells are simply absent.
// Person and item indices are dense: each one has at least one record.
struct ResponseTable {
  std::string survey_name;
  std::vector<Response> records;
  std::vector<std::string> person_ids;
  std::vector<std::string> item_ids;
  ResponseScale scale;
  // Raw value corresponding to category 1 once to_categories has run; equal
  // to scale.min while the table still holds raw values.
  int raw_min = 1;
  bool category_scale = false;

  std::size_t n_persons() const { return person_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }
  std::size_t size() const { return records.size(); }

  bool operator==(const ResponseTable&) const = default;
};

struct ItemInfo {
  std::string id;
  bool negative = false;
  int position = 1;
  std::string text;
  std::vector<double> extra;  // aligned with ItemDesign::extra_names
};

// Per-item metadata, ordered identically to ResponseTable::item_ids.
struct ItemDesign {
  std::vector<ItemInfo> items;
  std::vector<std::string> extra_names;
  int n_categories = 2;

  std::size_t size() const { return items.size(); }

  // Numeric column by name: "negative", "position", or an extra covariate.
  std::vector<double> covariate(std::string_view name) const;
  bool has_covariate(std::string_view name) const;
  void add_covariate(const std::string& name, const std::vector<double>& values);
};

struct Dataset {
  ResponseTable table;
  ItemDesign design;
  std::vector<std::string> warnings;
};

// Builds the canonical table from parsed CSVs. Items are indexed in order of
// position; persons in order of first appearance. Items without responses are
// dropped with a warning.
// Items file alone, in file order; n_categories is left at its default.
ItemDesign parse_items(const csv::Table& items, std::string_view items_source = "items",
                       std::vector<std::string>* warnings = nullptr);

Dataset ingest(const csv::Table& responses, const csv::Table& items, const SurveyConfig& config,
               std::string_view responses_source = "responses",
               std::string_view items_source = "items");
Dataset ingest(const std::filesystem::path& responses_csv, const std::filesystem::path& items_csv,
               const SurveyConfig& config);

// y -> (min + max) - y on negatively framed items, using declared bounds.
ResponseTable reverse_code(const ResponseTable& table, const ItemDesign& design,
                           const SurveyConfig& config);

// Shift raw values onto categories 1..K.
ResponseTable to_categories(const ResponseTable& table, const SurveyConfig& config);
// Inverse of to_categories.
ResponseTable to_raw(const ResponseTable& table);

// Reverse coding (if configured) followed by the category shift.
ResponseTable prepare_for_model(const ResponseTable& raw, const ItemDesign& design,
                                const SurveyConfig& config);

// Keep only the listed persons (by index), re-indexing densely. Items left
// without records are removed from both table and design.
struct Subset {
  ResponseTable table;
  ItemDesign design;
};
Subset select_persons(const ResponseTable& table, const ItemDesign& design,
                      const std::vector<int>& keep_persons);

// Wide table (one row per person, one column per item) to the long
// `person_id,item_id,response` layout. Empty cells are treated as missing.
csv::Table wide_to_long(const csv::Table& wide, std::string_view person_column);

void write_responses_csv(const ResponseTable& table, const std::filesystem::path& path);
void write_items_csv(const ItemDesign& design, const std::filesystem::path& path);

SurveyConfig read_survey_config(const std::filesystem::path& path);

}  // namespace eirm
