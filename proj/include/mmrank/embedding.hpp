#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrank/corpus.hpp"

namespace mmrank {

enum class Modality { kText, kImage, kMultimodal };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);
inline constexpr Modality kAllModalities[] = {Modality::kText, Modality::kImage,
                                              Modality::kMultimodal};

inline bool uses_text(Modality m) { return m != Modality::kImage; }
inline bool uses_image(Modality m) { return m != Modality::kText; }

/// Sparse vector with strictly increasing indices < dim and no explicit zeros.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  /// Sorts, rejects duplicates and out-of-range indices, drops zeros.
  static SparseVector from_entries(std::size_t dim,
                                   std::vector<std::pair<std::uint32_t, double>> entries);
  bool valid() const;
  double squared_norm() const;

  bool operator==(const SparseVector&) const = default;
};

struct DenseVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double norm() const;

  bool operator==(const DenseVector&) const = default;
};

/// A listing (or a difference of listings) in one modality's feature space:
/// text block over |T| columns followed by an image block over |I| columns.
struct MultimodalVector {
  Modality modality = Modality::kText;
  SparseVector text;
  DenseVector image;

  std::size_t logical_dim() const { return text.dim + image.size(); }
  bool operator==(const MultimodalVector&) const = default;
};

/// Column layout of the sparse text block: terms, then listing ids, then shop ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::string> listing_ids,
             std::vector<std::string> shop_ids);

  std::size_t term_count() const { return term_index_.size(); }
  std::size_t listing_count() const { return listing_index_.size(); }
  std::size_t shop_count() const { return shop_index_.size(); }
  std::size_t total_dim() const { return term_count() + listing_count() + shop_count(); }

  std::optional<std::uint32_t> term_column(const std::string& term) const;
  std::optional<std::uint32_t> listing_column(const std::string& listing_id) const;
  std::optional<std::uint32_t> shop_column(const std::string& shop_id) const;

  const std::map<std::string, std::uint32_t>& term_index() const { return term_index_; }
  const std::map<std::string, std::uint32_t>& listing_index() const { return listing_index_; }
  const std::map<std::string, std::uint32_t>& shop_index() const { return shop_index_; }

  std::string to_json() const;
  static Vocabulary from_json(std::string_view text);

 private:
  std::map<std::string, std::uint32_t> term_index_;
  std::map<std::string, std::uint32_t> listing_index_;
  std::map<std::string, std::uint32_t> shop_index_;
};

/// Lowercase, split on runs of non-alphanumeric characters.
std::vector<std::string> tokenize(std::string_view text);

/// Unigrams and bigrams of the title and of each tag. Bigrams never span
/// field boundaries. Result is sorted and unique.
std::vector<std::string> listing_terms(const Listing& listing);

/// Unique unigrams of the title only.
std::vector<std::string> title_terms(const Listing& listing);

Vocabulary build_vocabulary(const Catalog& catalog, std::size_t min_term_count = 1);

SparseVector embed_text(const Listing& listing, const Vocabulary& vocab);

DenseVector normalize_l2(const DenseVector& v);

/// Raw (unnormalized) image vectors keyed by image_ref.
struct EmbeddingStore {
  std::size_t dim = 0;
  std::map<std::string, DenseVector> vectors;

  const DenseVector* find(const std::string& image_ref) const;
};

MultimodalVector embed_multimodal(const Listing& listing, const Vocabulary& vocab,
                                  const EmbeddingStore* store, Modality modality);

// Text format: "dim=<N>" header, then "<image_ref> v1 v2 ... vN" per line.
// Binary format: "MMEB", u32 dim, then records of u32 key length, key bytes,
// N little-endian float32.
EmbeddingStore parse_embedding_store(std::string_view bytes, const std::string& source = "<embeddings>");
EmbeddingStore load_embedding_store(const std::filesystem::path& path);
std::string format_embedding_store_text(const EmbeddingStore& store);
std::string format_embedding_store_binary(const EmbeddingStore& store);
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path,
                           bool binary = false);

/// Precomputed embeddings of every catalog listing in one modality. Lookups
/// are const and safe to share across threads.
class EmbeddingTable {
 public:
  EmbeddingTable(const Catalog& catalog, const Vocabulary& vocab, const EmbeddingStore* store,
                 Modality modality);

  Modality modality() const { return modality_; }
  std::size_t text_dim() const { return text_dim_; }
  std::size_t image_dim() const { return image_dim_; }

  /// nullptr when the listing is unknown or lacks a usable image.
  const MultimodalVector* find(const std::string& listing_id) const;
  std::size_t unavailable_count() const { return unavailable_; }

 private:
  Modality modality_;
  std::size_t text_dim_ = 0;
  std::size_t image_dim_ = 0;
  std::size_t unavailable_ = 0;
  std::map<std::string, MultimodalVector> vectors_;
};

}  // namespace mmrank
