#pragma once

#include "avishape/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace avishape {

struct SkinWeight {
  int vertex = 0;
  int joint = 0;
  double weight = 0.0;
};

/// A keypoint is the mean of one or more template vertices.
struct KeypointDef {
  std::string name;
  std::vector<int> vertices;
};

/// A named vertex set. Groups with an anchor joint can be length-scaled
/// (beak, tail); other groups only label regions.
struct PartGroup {
  std::string name;
  std::vector<int> vertices;
  int anchor_joint = -1;
};

/// Raw template contents as stored on disk. Validated by TemplateModel.
struct TemplateData {
  Points3 vertices;
  Faces faces;
  Points3 joints;
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // -1 marks the root
  std::vector<SkinWeight> skin_weights;
  std::vector<KeypointDef> keypoints;
  std::vector<PartGroup> parts;
  /// Unordered mirror pairs (p, q); midline vertices appear as (p, p).
  std::vector<std::pair<int, int>> symmetry_pairs;
  Eigen::VectorXd rigidity;
};

/// Immutable, validated articulated template with derived adjacency and
/// skinning caches. Safe to share across threads.
class TemplateModel {
 public:
  struct Entry {
    int index;
    double weight;
  };

  /// Validates every invariant and throws InvalidInput naming the first
  /// violated one.
  explicit TemplateModel(TemplateData data);

  const TemplateData& data() const { return data_; }
  const Points3& vertices() const { return data_.vertices; }
  const Faces& faces() const { return data_.faces; }
  const Points3& joints() const { return data_.joints; }
  const std::vector<int>& parent() const { return data_.parent; }
  const std::vector<KeypointDef>& keypoints() const { return data_.keypoints; }
  const std::vector<std::pair<int, int>>& symmetry_pairs() const { return data_.symmetry_pairs; }
  const Eigen::VectorXd& rigidity() const { return data_.rigidity; }

  int num_vertices() const { return static_cast<int>(data_.vertices.rows()); }
  int num_faces() const { return static_cast<int>(data_.faces.rows()); }
  int num_joints() const { return static_cast<int>(data_.joints.rows()); }
  int num_keypoints() const { return static_cast<int>(data_.keypoints.size()); }

  const std::vector<std::array<int, 2>>& edges() const { return edges_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  /// Joints ordered so that every parent precedes its children.
  const std::vector<int>& joint_order() const { return joint_order_; }
  int root_joint() const { return joint_order_.front(); }

  /// Per-vertex nonzero skinning weights (joint, weight).
  const std::vector<Entry>& skin_row(int vertex) const { return skin_rows_[vertex]; }
  /// Per-joint region weights (vertex, w / sum_v w), used to re-derive joint
  /// positions from a deformed rest shape.
  const std::vector<Entry>& joint_region(int joint) const { return joint_regions_[joint]; }

  const PartGroup* find_part(const std::string& name) const;
  const PartGroup& part(const std::string& name) const;
  int keypoint_index(const std::string& name) const;
  int joint_index(const std::string& name) const;

  /// Principal axis of a part's rest-pose vertices, oriented from the anchor
  /// joint towards the part centroid.
  Eigen::Vector3d part_axis(const std::string& name) const;

  /// Rest-pose distance between the beak-tip and tail-tip keypoints.
  double body_length() const;

  /// Stable 64-bit content hash rendered as 16 hex digits.
  const std::string& hash() const { return hash_; }

 private:
  void validate() const;
  void derive();

  TemplateData data_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> joint_order_;
  std::vector<std::vector<Entry>> skin_rows_;
  std::vector<std::vector<Entry>> joint_regions_;
  std::vector<std::pair<std::string, Eigen::Vector3d>> part_axes_;
  std::string hash_;
};

/// Undirected unique edges of a face list.
std::vector<std::array<int, 2>> edges_from_faces(const Faces& faces);

/// Mean of the keypoint's vertices.
Eigen::Vector3d keypoint_position(const KeypointDef& kp, const Points3& vertices);
Points3 keypoint_positions(const TemplateModel& tmpl, const Points3& vertices);

}  // namespace avishape
