#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmrank {

/// An e-commerce document that can be ranked for a query.
struct Listing {
  std::string listing_id;
  std::string shop_id;
  std::string title;
  std::vector<std::string> tags;
  std::optional<std::string> image_ref;

  bool operator==(const Listing&) const = default;
};

enum class InteractionKind { kIgnored, kClicked, kCarted, kPurchased };

std::string_view to_string(InteractionKind kind);
/// Throws UnknownKindError for anything outside the enum.
InteractionKind parse_interaction_kind(std::string_view text);

struct Interaction {
  InteractionKind kind = InteractionKind::kIgnored;
  double dwell_seconds = 0.0;  // only meaningful for kClicked

  bool operator==(const Interaction&) const = default;
};

struct PresentedResult {
  std::string listing_id;
  Interaction interaction;

  bool operator==(const PresentedResult&) const = default;
};

/// One result page shown to a user, in presentation order (position 1 first).
struct Session {
  std::string query;
  std::vector<PresentedResult> presented;
  std::int64_t timestamp = 0;
  bool fairpairs_flag = false;

  bool operator==(const Session&) const = default;
};

struct Catalog {
  std::map<std::string, Listing> listings;
  std::vector<std::string> source_meta;

  const Listing* find(const std::string& listing_id) const;
  std::size_t size() const { return listings.size(); }
};

inline constexpr double kDefaultDwellThreshold = 30.0;

/// Lowercases and collapses whitespace runs; trims both ends.
std::string normalize_query(std::string_view raw);

/// Binary implicit relevance. Clicks count only when the dwell is strictly
/// longer than the threshold; carts and purchases always count.
double relevance_of(const Interaction& interaction,
                    double dwell_threshold = kDefaultDwellThreshold);

// Catalog TSV: header line, then listing_id, shop_id, title, comma-joined
// tags, image_ref (may be empty).
Catalog parse_catalog(std::string_view text, const std::string& source = "<catalog>");
Catalog load_catalog(const std::filesystem::path& path);
std::string format_catalog(const Catalog& catalog);
void write_catalog(const Catalog& catalog, const std::filesystem::path& path);

// Session JSONL: {"query", "ts", "fairpairs", "results": [{"listing","kind","dwell"}]}
std::vector<Session> parse_sessions(std::string_view text, const std::string& source = "<sessions>");
std::vector<Session> load_sessions(const std::filesystem::path& path);
std::string format_sessions(const std::vector<Session>& sessions);
void write_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path);

/// Reads a whole file; throws Error when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mmrank
