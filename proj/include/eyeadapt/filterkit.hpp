#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/history.hpp"
#include "eyeadapt/neuralblocks.hpp"

namespace eyeadapt {

struct LatentEmbedding {
  std::string id;
  std::vector<double> z;
};

enum class PairKind { kSameSource, kSameTarget, kCross };

/// Indices refer to the source set when the matching `*_source` flag is set,
/// otherwise to the target set.
struct SiamesePair {
  PairKind kind = PairKind::kCross;
  std::size_t a = 0;
  std::size_t b = 0;
  bool a_source = true;
  bool b_source = false;

  bool same_domain() const { return kind != PairKind::kCross; }
  friend bool operator==(const SiamesePair&, const SiamesePair&) = default;
};

/// Pair kinds cycle same-source, same-target, cross, cross, so any count that
/// is a multiple of four holds them in exact 1:1:2 proportion. No pair uses
/// the same sample id twice.
std::vector<SiamesePair> sample_pairs(const Dataset& source, const Dataset& target, int count, Rng& rng);

struct SiameseConfig {
  SiameseEncoderSpec encoder;
  int epochs = 5;
  int pairs_per_epoch = 500;
  int batch_size = 20;
  double lr = 1e-3;
  double margin = 1.0;
  std::uint64_t seed = 0;
};

void validate(const SiameseConfig& cfg);

struct SiameseResult {
  SiameseEncoder encoder{nullptr};
  History history;  // per-epoch mean contrastive loss
  double final_loss = 0.0;
};

SiameseResult train_siamese(const Dataset& source, const Dataset& target, const SiameseConfig& cfg,
                            const std::filesystem::path& out_dir = {});

/// Embeddings in dataset order, computed in eval mode without gradients.
std::vector<LatentEmbedding> embed_dataset(SiameseEncoder& encoder, const Dataset& ds);

struct CentroidModel {
  std::vector<double> centroid;
  std::string encoder_id;
  int dim = 0;
};

/// Arithmetic mean of the vectors; throws on an empty set.
std::vector<double> centroid_of(const std::vector<std::vector<double>>& points);
CentroidModel compute_centroid(SiameseEncoder& encoder, const Dataset& real, const std::string& encoder_id = {});

/// Squared Euclidean distance.
double squared_distance(const std::vector<double>& a, const std::vector<double>& b);
double distance_to_centroid(SiameseEncoder& encoder, const ImageSample& sample, const CentroidModel& centroid);

struct FilterResult {
  Dataset kept;
  std::vector<LatentEmbedding> embeddings;  // every input sample
  std::vector<double> distances;            // every input sample
  std::size_t total = 0;
  std::vector<std::string> warnings;
};

/// Keeps the samples with distance strictly below `threshold`, in input order.
FilterResult filter_by_distance(const Dataset& ds, const std::vector<double>& distances, double threshold);
FilterResult filter_dataset(SiameseEncoder& encoder, const Dataset& ds, const CentroidModel& centroid,
                            double threshold);

double mean_of(const std::vector<double>& values);
/// Mean squared distance of the dataset's embeddings to the centroid.
double mean_distance(SiameseEncoder& encoder, const Dataset& ds, const CentroidModel& centroid);

/// Columns: id, z0..z{n-1}, distance.
void write_embeddings_csv(const std::vector<LatentEmbedding>& embeddings, const std::vector<double>& distances,
                          const std::filesystem::path& path);

}  // namespace eyeadapt
