#pragma once

#include "avishape/annotation.hpp"
#include "avishape/energy.hpp"
#include "avishape/fitting.hpp"
#include "avishape/optim.hpp"
#include "avishape/phylo.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/synthetic_data.hpp"
#include "avishape/template_model.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace avishape {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Raw files

std::string read_text(const fs::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
/// Creates missing parent directories.
void write_atomic(const fs::path& path, const std::string& bytes);

/// Little-endian float64 array without header.
void write_blob(const fs::path& path, const double* data, std::size_t count);
std::vector<double> read_blob(const fs::path& path);

// ---------------------------------------------------------------------------
// Template: OBJ (v/f records, 1-based) plus a sidecar JSON next to it with
// the same stem ("bird.obj" + "bird.json").

void write_obj(const fs::path& path, const Points3& vertices, const Faces& faces);
/// Reads v and f records; other records are ignored. Faces must be triangles.
void read_obj(const fs::path& path, Points3& vertices, Faces& faces);

void write_template(const fs::path& obj_path, const TemplateData& data);
TemplateData read_template(const fs::path& obj_path);

// ---------------------------------------------------------------------------
// Masks: binary PGM (P5, maxval 255). Set pixels are written as 255; on read
// any nonzero value is set.

void write_pgm(const fs::path& path, const BinaryMask& mask);
BinaryMask read_pgm(const fs::path& path);
/// Soft mask dump for inspection: round(255 * value).
void write_pgm(const fs::path& path, const Image& image);

// ---------------------------------------------------------------------------
// Dataset manifest: JSON listing the camera, template hash and instances
// (id, species, keypoints [x, y, visible], mask path relative to the
// manifest, bbox [x, y, w, h]).

struct Manifest {
  std::string template_hash;
  Camera camera;
  std::vector<AnnotatedInstance> instances;
};

/// Writes the manifest and one PGM per instance under `masks/`.
void write_manifest(const fs::path& path, const Manifest& manifest);
Manifest read_manifest(const fs::path& path);

// ---------------------------------------------------------------------------
// Pose parameter files (JSON, one per instance).

struct ParamsFile {
  std::string id;
  PoseParams params;
  Eigen::VectorXd beta;
  double pck = 0.0;
  double iou = 0.0;
  bool failed = false;
  std::string failure;
};

void write_params(const fs::path& path, const ParamsFile& params);
ParamsFile read_params(const fs::path& path);

// ---------------------------------------------------------------------------
// Models: JSON header plus raw float64 arrays stored next to it
// ("<stem>.<field>.f64"). Matrices are stored column-major.

void write_species_model(const fs::path& path, const SpeciesModel& model);
SpeciesModel read_species_model(const fs::path& path);
void write_multispecies_model(const fs::path& path, const MultiSpeciesModel& model);
MultiSpeciesModel read_multispecies_model(const fs::path& path);
/// "species" or "multispecies", from the header.
std::string model_kind(const fs::path& path);

/// Throws InvalidInput("template hash mismatch: ...") unless equal.
void check_template_hash(const std::string& expected, const std::string& found, const std::string& what);

/// Pose prior: JSON header plus means and covariances as float64 arrays.
void write_prior(const fs::path& path, const PosePrior& prior);
PosePrior read_prior(const fs::path& path);

// ---------------------------------------------------------------------------
// Synthetic ground truth (sealed, for scoring only).

void write_ground_truth(const fs::path& path, const SyntheticGroundTruth& truth,
                        const std::vector<std::string>& ids);
SyntheticGroundTruth read_ground_truth(const fs::path& path, std::vector<std::string>* ids = nullptr);

// ---------------------------------------------------------------------------
// key=value configuration. '#' starts a comment; blank lines are skipped.
// Later layers override earlier ones.

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "config");
KeyValues read_key_values(const fs::path& path);
std::string format_key_values(const KeyValues& kv);

/// Typed access; throws InvalidInput naming the key on a malformed value.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<double> kv_doubles(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback);

/// Reads w_kp, w_msk, ..., gm_sigma_fraction, huber_delta.
EnergyWeights energy_weights_from(const KeyValues& kv, EnergyWeights base = {});
/// Reads species, seed, mean (recipe:magnitude,...), variation (recipe,...),
/// variation_magnitude, instances, pose_scale, keypoint_noise_px,
/// mask_noise_px, image_size, position_jitter.
SyntheticSpeciesSpec synthetic_spec_from(const KeyValues& kv);

// ---------------------------------------------------------------------------
// Tables

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
std::string format_csv(const CsvTable& table);
/// Comma-separated, no quoting. Throws on ragged rows.
CsvTable parse_csv(const std::string& text);

/// First column species, remaining columns numeric.
void write_traits_csv(const fs::path& path, const std::vector<std::string>& species, const Eigen::MatrixXd& traits,
                      const std::vector<std::string>& columns = {});
void read_traits_csv(const fs::path& path, std::vector<std::string>& species, Eigen::MatrixXd& traits);

/// Labeled scatter plot of S x 2 points.
std::string scatter_svg(const std::vector<std::string>& labels, const Eigen::MatrixXd& xy, const std::string& title);

}  // namespace avishape
