#pragma once

// Readers for the JSON fixtures produced by the scripts in this directory.

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "eirm/data.hpp"
#include "eirm/kernel.hpp"

namespace oracle {

struct LoglikCase {
  eirm::ResponseTable table;
  eirm::ModelParams params;
  double expected = 0.0;
};

inline LoglikCase loglik_case(const nlohmann::json& c) {
  LoglikCase out;
  auto& t = out.table;
  const auto a = c.at("a").get<std::vector<double>>();
  const auto b = c.at("b").get<std::vector<double>>();
  const auto theta = c.at("theta").get<std::vector<double>>();
  for (std::size_t j = 0; j < theta.size(); ++j) t.person_ids.push_back("p" + std::to_string(j));
  for (std::size_t i = 0; i < a.size(); ++i) t.item_ids.push_back("i" + std::to_string(i));
  for (const auto& r : c.at("records")) t.records.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>()});
  t.category_scale = true;
  const int K = c.at("n_categories").get<int>();
  t.scale = {1, K};

  auto& p = out.params;
  p.family = eirm::family_from_string(c.at("family").get<std::string>());
  p.a = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  p.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  const auto rows = c.at("thresholds").get<std::vector<std::vector<double>>>();
  if (!rows.empty()) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), K - 1);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int k = 0; k < K - 1; ++k) m(static_cast<Eigen::Index>(r), k) = rows[r][static_cast<std::size_t>(k)];
    p.thresholds = eirm::ThresholdSet(m);
  }
  out.expected = c.at("loglik").get<double>();
  return out;
}

// Two-item toy as a response table: one person per observed pattern.
inline eirm::ResponseTable mml_toy_table(const nlohmann::json& fixture, eirm::ItemDesign& design) {
  eirm::ResponseTable t;
  t.item_ids = {"i1", "i2"};
  t.category_scale = true;
  t.scale = {1, 3};
  const auto counts = fixture.at("counts").get<std::vector<std::vector<int>>>();
  int j = 0;
  for (int k1 = 0; k1 < 3; ++k1) {
    for (int k2 = 0; k2 < 3; ++k2) {
      for (int n = 0; n < counts[static_cast<std::size_t>(k1)][static_cast<std::size_t>(k2)]; ++n, ++j) {
        t.person_ids.push_back("p" + std::to_string(j));
        t.records.push_back({j, 0, k1 + 1});
        t.records.push_back({j, 1, k2 + 1});
      }
    }
  }
  design = {};
  design.n_categories = 3;
  design.items = {{"i1", false, 1, "", {}}, {"i2", false, 2, "", {}}};
  return t;
}

}  // namespace oracle
