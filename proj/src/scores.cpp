#include "circscope/scores.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "circscope/csv.hpp"

namespace circscope {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string to_string(ScoreAggregation agg) {
  return agg == ScoreAggregation::SignedMeanAbsAfter ? "signed_mean" : "mean_of_abs";
}

const EdgeScore& EdgeScoreTable::at(const Edge& e) const {
  for (const auto& s : entries) {
    if (s.edge == e) return s;
  }
  throw DataError("score table has no edge '" + edge_id(e) + "'");
}

bool EdgeScoreTable::has(const Edge& e) const {
  for (const auto& s : entries) {
    if (s.edge == e) return true;
  }
  return false;
}

std::uint64_t EdgeScoreTable::digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& s : entries) {
    const std::string id = edge_id(s.edge);
    h = fnv1a(h, id.data(), id.size());
    h = fnv1a(h, &s.signed_score, sizeof(s.signed_score));
    h = fnv1a(h, &s.abs_score, sizeof(s.abs_score));
  }
  return h;
}

bool Circuit::contains(const Edge& e) const {
  for (const auto& c : edges) {
    if (c == e) return true;
  }
  return false;
}

std::string scores_csv_string(const EdgeScoreTable& table) {
  std::ostringstream out;
  out << "edge_id,signed_score,abs_score\n";
  for (const auto& s : table.entries) {
    out << edge_id(s.edge) << "," << csv_double(s.signed_score) << ","
        << csv_double(s.abs_score) << "\n";
  }
  return out.str();
}

void write_scores_csv(const std::filesystem::path& path, const EdgeScoreTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scores CSV '" + path.string() + "'");
  out << scores_csv_string(table);
}

EdgeScoreTable read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "edge_id,signed_score,abs_score") {
    throw DataError("scores CSV '" + path.string() + "': bad header");
  }
  EdgeScoreTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw DataError("scores CSV '" + path.string() + "': bad row '" + line + "'");
    }
    EdgeScore s;
    s.edge = parse_edge_id(line.substr(0, c1));
    try {
      s.signed_score = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      s.abs_score = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw DataError("scores CSV '" + path.string() + "': bad number in row '" + line + "'");
    }
    table.entries.push_back(std::move(s));
  }
  return table;
}

void write_circuit_json(const std::filesystem::path& path, const Circuit& circuit) {
  nlohmann::json j;
  j["method"] = circuit.method;
  j["parameter"] = circuit.parameter;
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : circuit.edges) j["edges"].push_back(edge_id(e));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write circuit JSON '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

Circuit read_circuit_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open circuit JSON '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("circuit JSON '" + path.string() + "': " + e.what());
  }
  Circuit c;
  try {
    c.method = j.at("method").get<std::string>();
    c.parameter = j.at("parameter").get<double>();
    for (const auto& id : j.at("edges")) c.edges.push_back(parse_edge_id(id.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("circuit JSON '" + path.string() + "': " + e.what());
  }
  return c;
}

}  // namespace circscope
