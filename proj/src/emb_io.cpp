#include "emde/emb_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "emde/error.hpp"
#include "emde/format.hpp"

namespace emde {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::optional<Eigen::Index> EmbeddingTable::find(std::string_view id) const {
  const auto it = index.find(std::string(id));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable EmbeddingTable::from_rows(std::string modality, std::vector<std::string> ids,
                                         Eigen::MatrixXd vectors) {
  if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
    throw ContractError("embedding ids and rows disagree in count");
  if (!vectors.allFinite()) throw DataError("non-finite embedding value in " + modality);
  EmbeddingTable table;
  table.modality = std::move(modality);
  table.ids = std::move(ids);
  table.vectors = std::move(vectors);
  for (Eigen::Index i = 0; i < table.vectors.rows(); ++i) {
    if (!table.index.emplace(table.ids[i], i).second)
      throw DataError("duplicate entity '" + table.ids[i] + "' in " + table.modality);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::string modality) {
  auto in = open_input(path);
  std::vector<std::string> ids;
  std::vector<double> values;
  std::unordered_map<std::string, Eigen::Index> seen;
  std::size_t dim = 0;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 2) throw FormatError(path.string(), line_no, "expected id and at least one value");
    const std::size_t row_dim = fields.size() - 1;
    if (ids.empty()) {
      dim = row_dim;
    } else if (row_dim != dim) {
      throw FormatError(path.string(), line_no,
                        "dimension " + std::to_string(row_dim) + " != " + std::to_string(dim));
    }
    std::string id(fields[0]);
    if (id.empty()) throw FormatError(path.string(), line_no, "empty entity id");
    if (!seen.emplace(id, static_cast<Eigen::Index>(ids.size())).second)
      throw FormatError(path.string(), line_no, "duplicate entity '" + id + "'");
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto v = parse_double(fields[j]);
      if (!v || !std::isfinite(*v))
        throw FormatError(path.string(), line_no, "bad value '" + std::string(fields[j]) + "'");
      values.push_back(*v);
    }
    ids.push_back(std::move(id));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd vectors =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          values.data(), n, static_cast<Eigen::Index>(dim));
  EmbeddingTable table;
  table.modality = std::move(modality);
  table.ids = std::move(ids);
  table.vectors = std::move(vectors);
  table.index = std::move(seen);
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  auto out = open_output(path);
  for (Eigen::Index i = 0; i < table.size(); ++i) {
    out << table.ids[i];
    for (Eigen::Index j = 0; j < table.dim(); ++j) out << '\t' << format_double(table.vectors(i, j));
    out << '\n';
  }
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string raw;
  if (!std::getline(in, raw) || strip_cr(raw) != "userId,movieId,rating,timestamp")
    throw FormatError(path.string(), 1, "expected header userId,movieId,rating,timestamp");
  std::vector<Interaction> log;
  std::set<std::tuple<std::string, std::string, std::int64_t>> seen;
  std::size_t line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 4) throw FormatError(path.string(), line_no, "expected 4 fields");
    Interaction row;
    row.user_id = std::string(fields[0]);
    row.item_id = std::string(fields[1]);
    if (row.user_id.empty() || row.item_id.empty())
      throw FormatError(path.string(), line_no, "empty user or item id");
    const auto rating = parse_double(fields[2]);
    if (!rating || !(*rating >= kMinRating && *rating <= kMaxRating))
      throw FormatError(path.string(), line_no, "rating out of range [0.5, 5.0]");
    row.rating = *rating;
    const auto ts = fields[3];
    const auto res = std::from_chars(ts.data(), ts.data() + ts.size(), row.timestamp);
    if (res.ec != std::errc() || res.ptr != ts.data() + ts.size())
      throw FormatError(path.string(), line_no, "bad timestamp");
    if (!seen.emplace(row.user_id, row.item_id, row.timestamp).second)
      throw FormatError(path.string(), line_no, "repeated (user, item, timestamp)");
    log.push_back(std::move(row));
  }
  return log;
}

void save_interactions(const std::filesystem::path& path, const std::vector<Interaction>& log) {
  auto out = open_output(path);
  out << "userId,movieId,rating,timestamp\n";
  for (const auto& r : log)
    out << r.user_id << ',' << r.item_id << ',' << format_double(r.rating) << ',' << r.timestamp << '\n';
}

SplitHistories split_interactions(const std::vector<Interaction>& log, double threshold) {
  if (!(threshold >= kMinRating && threshold <= kMaxRating))
    throw ContractError("like threshold outside the rating range");
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return log[a].timestamp < log[b].timestamp;
  });
  SplitHistories out;
  for (const auto i : order) {
    const auto& row = log[i];
    auto& target = row.rating >= threshold ? out.liked : out.disliked;
    target[row.user_id].push_back(row.item_id);
  }
  return out;
}

EntityMap load_entity_map(const std::filesystem::path& path, std::string modality) {
  auto in = open_input(path);
  EntityMap map;
  map.modality = std::move(modality);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty())
      throw FormatError(path.string(), line_no, "expected item_id<TAB>entity list");
    std::vector<std::string> entities;
    for (const auto e : split(fields[1], ',')) {
      if (e.empty()) throw FormatError(path.string(), line_no, "empty entity id");
      entities.emplace_back(e);
    }
    if (!map.entities.emplace(std::string(fields[0]), std::move(entities)).second)
      throw FormatError(path.string(), line_no, "item '" + std::string(fields[0]) + "' mapped twice");
  }
  return map;
}

void save_entity_map(const std::filesystem::path& path, const EntityMap& map) {
  std::vector<std::string> items;
  items.reserve(map.entities.size());
  for (const auto& [item, _] : map.entities) items.push_back(item);
  std::sort(items.begin(), items.end());
  auto out = open_output(path);
  for (const auto& item : items) {
    out << item << '\t';
    const auto& ents = map.entities.at(item);
    for (std::size_t i = 0; i < ents.size(); ++i) out << (i ? "," : "") << ents[i];
    out << '\n';
  }
}

std::vector<std::string> expand_entities(std::string_view item_id, std::string_view modality,
                                         const EntityMapSet& maps) {
  const auto m = maps.find(modality);
  if (m == maps.end()) return {std::string(item_id)};
  const auto it = m->second.entities.find(std::string(item_id));
  if (it == m->second.entities.end())
    throw MissingMetadataError("item '" + std::string(item_id) + "' has no " + std::string(modality) +
                               " metadata");
  return it->second;
}

void check_entity_coverage(const EntityMap& map, const EmbeddingTable& table) {
  std::set<std::string> missing;
  for (const auto& [item, entities] : map.entities)
    for (const auto& e : entities)
      if (!table.find(e)) missing.insert(e);
  if (missing.empty()) return;
  std::ostringstream msg;
  msg << missing.size() << " " << map.modality << " entities without embeddings:";
  std::size_t shown = 0;
  for (const auto& e : missing) {
    if (shown++ == 20) {
      msg << " ...";
      break;
    }
    msg << ' ' << e;
  }
  throw MissingMetadataError(msg.str());
}

}  // namespace emde
