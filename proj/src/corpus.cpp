#include "mmrank/corpus.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmrank/error.hpp"
#include "mmrank/log.hpp"

namespace mmrank {
namespace {

constexpr std::string_view kCatalogHeader = "listing_id\tshop_id\ttitle\ttags\timage_ref";

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits into lines, dropping a trailing '\r' from each.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  if (text.empty()) return lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

bool has_any(std::string_view s, std::string_view chars) {
  return s.find_first_of(chars) != std::string_view::npos;
}

}  // namespace

std::string_view to_string(InteractionKind kind) {
  switch (kind) {
    case InteractionKind::kIgnored: return "ignored";
    case InteractionKind::kClicked: return "clicked";
    case InteractionKind::kCarted: return "carted";
    case InteractionKind::kPurchased: return "purchased";
  }
  return "ignored";
}

InteractionKind parse_interaction_kind(std::string_view text) {
  if (text == "ignored") return InteractionKind::kIgnored;
  if (text == "clicked") return InteractionKind::kClicked;
  if (text == "carted") return InteractionKind::kCarted;
  if (text == "purchased") return InteractionKind::kPurchased;
  throw UnknownKindError(std::string(text));
}

const Listing* Catalog::find(const std::string& listing_id) const {
  const auto it = listings.find(listing_id);
  return it == listings.end() ? nullptr : &it->second;
}

std::string normalize_query(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

double relevance_of(const Interaction& interaction, double dwell_threshold) {
  switch (interaction.kind) {
    case InteractionKind::kPurchased:
    case InteractionKind::kCarted:
      return 1.0;
    case InteractionKind::kClicked:
      return interaction.dwell_seconds > dwell_threshold ? 1.0 : 0.0;
    case InteractionKind::kIgnored:
      return 0.0;
  }
  return 0.0;
}

Catalog parse_catalog(std::string_view text, const std::string& source) {
  Catalog catalog;
  catalog.source_meta.push_back("source: " + source);
  const auto lines = lines_of(text);
  if (lines.empty()) {
    warn("catalog " + source + " is empty");
    return catalog;
  }
  if (split(lines[0], '\t').at(0) != "listing_id") {
    throw ParseError(source, 1, "missing header line starting with 'listing_id'");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 5) {
      throw ParseError(source, line_no,
                       "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Listing listing;
    listing.listing_id = std::string(trim(fields[0]));
    listing.shop_id = std::string(trim(fields[1]));
    listing.title = std::string(fields[2]);
    if (listing.listing_id.empty()) throw ParseError(source, line_no, "empty listing_id");
    if (listing.shop_id.empty()) throw ParseError(source, line_no, "empty shop_id");
    if (!trim(fields[3]).empty()) {
      for (auto tag : split(fields[3], ',')) listing.tags.emplace_back(trim(tag));
    }
    if (const auto ref = trim(fields[4]); !ref.empty()) listing.image_ref = std::string(ref);
    if (trim(listing.title).empty() && listing.tags.empty()) {
      warn("listing " + listing.listing_id + " has no title or tags");
    }
    auto id = listing.listing_id;
    if (!catalog.listings.emplace(id, std::move(listing)).second) {
      throw DuplicateIdError(id, source + ":" + std::to_string(line_no));
    }
  }
  if (catalog.listings.empty()) warn("catalog " + source + " has no listings");
  return catalog;
}

Catalog load_catalog(const std::filesystem::path& path) {
  return parse_catalog(read_file(path), path.string());
}

std::string format_catalog(const Catalog& catalog) {
  std::string out(kCatalogHeader);
  out += '\n';
  for (const auto& [id, listing] : catalog.listings) {
    for (const auto* field : {&listing.listing_id, &listing.shop_id, &listing.title}) {
      if (has_any(*field, "\t\n\r")) {
        throw InvalidArgument("listing " + id + ": field contains a tab or newline");
      }
    }
    std::string tags;
    for (std::size_t i = 0; i < listing.tags.size(); ++i) {
      if (has_any(listing.tags[i], ",\t\n\r")) {
        throw InvalidArgument("listing " + id + ": tag contains a separator character");
      }
      if (i) tags += ',';
      tags += listing.tags[i];
    }
    out += listing.listing_id + '\t' + listing.shop_id + '\t' + listing.title + '\t' + tags + '\t' +
           listing.image_ref.value_or("") + '\n';
  }
  return out;
}

void write_catalog(const Catalog& catalog, const std::filesystem::path& path) {
  write_file(path, format_catalog(catalog));
}

std::vector<Session> parse_sessions(std::string_view text, const std::string& source) {
  using nlohmann::json;
  std::vector<Session> sessions;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    json record;
    try {
      record = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    Session session;
    try {
      session.query = normalize_query(record.at("query").get<std::string>());
      session.timestamp = record.at("ts").get<std::int64_t>();
      session.fairpairs_flag = record.value("fairpairs", false);
      std::set<std::string> seen;
      for (const auto& r : record.at("results")) {
        PresentedResult result;
        result.listing_id = r.at("listing").get<std::string>();
        result.interaction.kind = parse_interaction_kind(r.at("kind").get<std::string>());
        result.interaction.dwell_seconds = r.value("dwell", 0.0);
        const double dwell = result.interaction.dwell_seconds;
        if (!std::isfinite(dwell) || dwell < 0.0) {
          throw ParseError(source, line_no, "dwell must be a non-negative number");
        }
        if (result.interaction.kind == InteractionKind::kIgnored && dwell != 0.0) {
          throw ParseError(source, line_no, "ignored result with non-zero dwell");
        }
        if (!seen.insert(result.listing_id).second) {
          throw DuplicateIdError(result.listing_id, "session at " + source + ":" +
                                                        std::to_string(line_no));
        }
        session.presented.push_back(std::move(result));
      }
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    sessions.push_back(std::move(session));
  }
  return sessions;
}

std::vector<Session> load_sessions(const std::filesystem::path& path) {
  return parse_sessions(read_file(path), path.string());
}

std::string format_sessions(const std::vector<Session>& sessions) {
  using nlohmann::ordered_json;
  std::string out;
  for (const auto& session : sessions) {
    ordered_json record;
    record["query"] = session.query;
    record["ts"] = session.timestamp;
    record["fairpairs"] = session.fairpairs_flag;
    record["results"] = ordered_json::array();
    for (const auto& r : session.presented) {
      ordered_json item;
      item["listing"] = r.listing_id;
      item["kind"] = std::string(to_string(r.interaction.kind));
      item["dwell"] = r.interaction.dwell_seconds;
      record["results"].push_back(std::move(item));
    }
    out += record.dump();
    out += '\n';
  }
  return out;
}

void write_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path) {
  write_file(path, format_sessions(sessions));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace mmrank
