#include "mmrank/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

#include "mmrank/error.hpp"
#include "mmrank/log.hpp"

namespace mmrank {
namespace {

constexpr std::string_view kBinaryMagic = "MMEB";

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

void add_ngrams(std::string_view field, std::set<std::string>& out) {
  const auto tokens = tokenize(field);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.insert(tokens[i]);
    if (i + 1 < tokens.size()) out.insert(tokens[i] + ' ' + tokens[i + 1]);
  }
}

std::map<std::string, std::uint32_t> index_block(const std::vector<std::string>& keys,
                                                 std::uint32_t offset, const char* what) {
  std::map<std::string, std::uint32_t> index;
  for (const auto& key : keys) {
    if (!index.emplace(key, offset + static_cast<std::uint32_t>(index.size())).second) {
      throw DuplicateIdError(key, std::string("vocabulary ") + what);
    }
  }
  return index;
}

std::optional<std::uint32_t> lookup(const std::map<std::string, std::uint32_t>& index,
                                    const std::string& key) {
  const auto it = index.find(key);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::uint32_t read_u32_le(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

EmbeddingStore parse_binary(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 8) throw ParseError(source, 0, "truncated binary header");
  EmbeddingStore store;
  store.dim = read_u32_le(bytes, 4);
  std::size_t pos = 8;
  std::size_t record = 0;
  while (pos < bytes.size()) {
    ++record;
    if (pos + 4 > bytes.size()) throw ParseError(source, record, "truncated key length");
    const std::uint32_t key_len = read_u32_le(bytes, pos);
    pos += 4;
    if (pos + key_len + 4ULL * store.dim > bytes.size()) {
      throw ParseError(source, record, "truncated record");
    }
    std::string key(bytes.substr(pos, key_len));
    pos += key_len;
    DenseVector v;
    v.values.resize(store.dim);
    for (std::size_t j = 0; j < store.dim; ++j, pos += 4) {
      v.values[j] = static_cast<double>(std::bit_cast<float>(read_u32_le(bytes, pos)));
    }
    if (!store.vectors.emplace(key, std::move(v)).second) {
      throw DuplicateIdError(key, source);
    }
  }
  return store;
}

EmbeddingStore parse_text(std::string_view text, const std::string& source) {
  EmbeddingStore store;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    if (!have_header) {
      if (!line.starts_with("dim=")) throw ParseError(source, line_no, "expected 'dim=<N>' header");
      const auto digits = line.substr(4);
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), store.dim);
      if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw ParseError(source, line_no, "bad dimension in header");
      }
      have_header = true;
      continue;
    }
    const char* p = line.data();
    const char* last = line.data() + line.size();
    auto skip_ws = [&] {
      while (p < last && (*p == ' ' || *p == '\t')) ++p;
    };
    skip_ws();
    const char* key_begin = p;
    while (p < last && *p != ' ' && *p != '\t') ++p;
    std::string key(key_begin, p);
    DenseVector v;
    while (true) {
      skip_ws();
      if (p >= last) break;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(p, last, value);
      if (ec != std::errc()) throw ParseError(source, line_no, "bad number for key '" + key + "'");
      v.values.push_back(value);
      p = ptr;
    }
    if (v.size() != store.dim) {
      throw DimensionMismatchError(source + ":" + std::to_string(line_no) + ": key '" + key +
                                   "' has " + std::to_string(v.size()) + " values, expected " +
                                   std::to_string(store.dim));
    }
    if (!store.vectors.emplace(key, std::move(v)).second) throw DuplicateIdError(key, source);
    if (end == text.size()) break;
  }
  if (!have_header) throw ParseError(source, line_no, "missing 'dim=<N>' header");
  return store;
}

}  // namespace

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::kText: return "text";
    case Modality::kImage: return "image";
    case Modality::kMultimodal: return "multimodal";
  }
  return "text";
}

Modality parse_modality(std::string_view text) {
  if (text == "text") return Modality::kText;
  if (text == "image") return Modality::kImage;
  if (text == "multimodal" || text == "mm") return Modality::kMultimodal;
  throw InvalidArgument("unknown modality '" + std::string(text) + "'");
}

SparseVector SparseVector::from_entries(std::size_t dim,
                                        std::vector<std::pair<std::uint32_t, double>> entries) {
  std::sort(entries.begin(), entries.end());
  SparseVector v;
  v.dim = dim;
  v.entries.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.first >= dim) throw InvalidArgument("sparse index out of range");
    if (!v.entries.empty() && v.entries.back().first == e.first) {
      throw InvalidArgument("duplicate sparse index " + std::to_string(e.first));
    }
    if (e.second != 0.0) v.entries.push_back(e);
  }
  return v;
}

bool SparseVector::valid() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first >= dim || entries[i].second == 0.0) return false;
    if (i > 0 && entries[i - 1].first >= entries[i].first) return false;
  }
  return true;
}

double SparseVector::squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.second * e.second;
  return s;
}

double DenseVector::norm() const {
  double s = 0.0;
  for (double x : values) s += x * x;
  return std::sqrt(s);
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::string> listing_ids,
                       std::vector<std::string> shop_ids) {
  term_index_ = index_block(terms, 0, "terms");
  listing_index_ = index_block(listing_ids, static_cast<std::uint32_t>(terms.size()), "listings");
  shop_index_ = index_block(shop_ids, static_cast<std::uint32_t>(terms.size() + listing_ids.size()),
                            "shops");
}

std::optional<std::uint32_t> Vocabulary::term_column(const std::string& term) const {
  return lookup(term_index_, term);
}
std::optional<std::uint32_t> Vocabulary::listing_column(const std::string& listing_id) const {
  return lookup(listing_index_, listing_id);
}
std::optional<std::uint32_t> Vocabulary::shop_column(const std::string& shop_id) const {
  return lookup(shop_index_, shop_id);
}

std::string Vocabulary::to_json() const {
  // Column order, so the file doubles as an index -> name table.
  auto ordered = [](const std::map<std::string, std::uint32_t>& index) {
    std::vector<std::string> keys(index.size());
    const std::uint32_t base = index.empty() ? 0 : std::min_element(index.begin(), index.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; })->second;
    for (const auto& [k, col] : index) keys[col - base] = k;
    return keys;
  };
  nlohmann::ordered_json j;
  j["terms"] = ordered(term_index_);
  j["listings"] = ordered(listing_index_);
  j["shops"] = ordered(shop_index_);
  j["total_dim"] = total_dim();
  return j.dump();
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  return Vocabulary(j.at("terms").get<std::vector<std::string>>(),
                    j.at("listings").get<std::vector<std::string>>(),
                    j.at("shops").get<std::vector<std::string>>());
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> listing_terms(const Listing& listing) {
  std::set<std::string> terms;
  add_ngrams(listing.title, terms);
  for (const auto& tag : listing.tags) add_ngrams(tag, terms);
  return {terms.begin(), terms.end()};
}

std::vector<std::string> title_terms(const Listing& listing) {
  auto tokens = tokenize(listing.title);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

Vocabulary build_vocabulary(const Catalog& catalog, std::size_t min_term_count) {
  if (catalog.listings.empty()) throw InvalidArgument("cannot build a vocabulary from an empty catalog");
  std::map<std::string, std::size_t> document_frequency;
  std::set<std::string> shops;
  std::vector<std::string> listing_ids;
  for (const auto& [id, listing] : catalog.listings) {
    for (auto& term : listing_terms(listing)) ++document_frequency[term];
    shops.insert(listing.shop_id);
    listing_ids.push_back(id);
  }
  std::vector<std::string> terms;
  for (const auto& [term, count] : document_frequency) {
    if (count >= std::max<std::size_t>(min_term_count, 1)) terms.push_back(term);
  }
  return Vocabulary(std::move(terms), std::move(listing_ids), {shops.begin(), shops.end()});
}

SparseVector embed_text(const Listing& listing, const Vocabulary& vocab) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (const auto& term : listing_terms(listing)) {
    if (const auto col = vocab.term_column(term)) entries.emplace_back(*col, 1.0);
  }
  if (const auto col = vocab.listing_column(listing.listing_id)) {
    entries.emplace_back(*col, 1.0);
  } else {
    warn("listing " + listing.listing_id + " not in vocabulary; id feature skipped");
  }
  if (const auto col = vocab.shop_column(listing.shop_id)) {
    entries.emplace_back(*col, 1.0);
  } else {
    warn("shop " + listing.shop_id + " not in vocabulary; id feature skipped");
  }
  return SparseVector::from_entries(vocab.total_dim(), std::move(entries));
}

DenseVector normalize_l2(const DenseVector& v) {
  for (double x : v.values) {
    if (!std::isfinite(x)) throw InvalidArgument("non-finite value in dense vector");
  }
  const double n = v.norm();
  if (n == 0.0) throw ZeroVectorError("cannot L2-normalize an all-zero vector");
  DenseVector out;
  out.values.reserve(v.size());
  for (double x : v.values) out.values.push_back(x / n);
  return out;
}

const DenseVector* EmbeddingStore::find(const std::string& image_ref) const {
  const auto it = vectors.find(image_ref);
  return it == vectors.end() ? nullptr : &it->second;
}

MultimodalVector embed_multimodal(const Listing& listing, const Vocabulary& vocab,
                                  const EmbeddingStore* store, Modality modality) {
  MultimodalVector out;
  out.modality = modality;
  if (uses_text(modality)) out.text = embed_text(listing, vocab);
  if (uses_image(modality)) {
    if (store == nullptr) throw InvalidArgument("image modality requested without an embedding store");
    const std::string key = listing.image_ref.value_or("");
    const DenseVector* raw = key.empty() ? nullptr : store->find(key);
    if (raw == nullptr) throw MissingEmbeddingError(key.empty() ? "<none:" + listing.listing_id + ">" : key);
    out.image = normalize_l2(*raw);
  }
  return out;
}

EmbeddingStore parse_embedding_store(std::string_view bytes, const std::string& source) {
  if (bytes.starts_with(kBinaryMagic)) return parse_binary(bytes, source);
  return parse_text(bytes, source);
}

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
  return parse_embedding_store(read_file(path), path.string());
}

std::string format_embedding_store_text(const EmbeddingStore& store) {
  std::string out = "dim=" + std::to_string(store.dim) + "\n";
  char buf[32];
  for (const auto& [key, v] : store.vectors) {
    if (v.size() != store.dim) throw DimensionMismatchError("key '" + key + "' has wrong dimension");
    out += key;
    for (double x : v.values) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
      out += ' ';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

std::string format_embedding_store_binary(const EmbeddingStore& store) {
  std::string out(kBinaryMagic);
  append_u32_le(out, static_cast<std::uint32_t>(store.dim));
  for (const auto& [key, v] : store.vectors) {
    if (v.size() != store.dim) throw DimensionMismatchError("key '" + key + "' has wrong dimension");
    append_u32_le(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    for (double x : v.values) append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path,
                           bool binary) {
  write_file(path, binary ? format_embedding_store_binary(store) : format_embedding_store_text(store));
}

EmbeddingTable::EmbeddingTable(const Catalog& catalog, const Vocabulary& vocab,
                               const EmbeddingStore* store, Modality modality)
    : modality_(modality) {
  if (uses_image(modality) && store == nullptr) {
    throw InvalidArgument(std::string("modality ") + std::string(to_string(modality)) +
                          " requires an embedding store");
  }
  text_dim_ = uses_text(modality) ? vocab.total_dim() : 0;
  image_dim_ = uses_image(modality) ? store->dim : 0;
  for (const auto& [id, listing] : catalog.listings) {
    try {
      vectors_.emplace(id, embed_multimodal(listing, vocab, store, modality));
    } catch (const MissingEmbeddingError&) {
      ++unavailable_;
    } catch (const ZeroVectorError&) {
      warn("listing " + id + " has an all-zero image vector");
      ++unavailable_;
    }
  }
}

const MultimodalVector* EmbeddingTable::find(const std::string& listing_id) const {
  const auto it = vectors_.find(listing_id);
  return it == vectors_.end() ? nullptr : &it->second;
}

}  // namespace mmrank
