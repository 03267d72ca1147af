#include "avishape/template_model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

namespace avishape {

namespace {

class Fnv1a {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
  void text(const std::string& s) {
    value(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[noreturn]] void fail(const std::string& what) { throw InvalidInput("template: " + what); }

}  // namespace

std::vector<std::array<int, 2>> edges_from_faces(const Faces& faces) {
  std::set<std::array<int, 2>> unique;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = faces(f, k);
      int b = faces(f, (k + 1) % 3);
      if (a == b) continue;
      unique.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return {unique.begin(), unique.end()};
}

Eigen::Vector3d keypoint_position(const KeypointDef& kp, const Points3& vertices) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int v : kp.vertices) sum += vertices.row(v).transpose();
  return sum / static_cast<double>(kp.vertices.size());
}

Points3 keypoint_positions(const TemplateModel& tmpl, const Points3& vertices) {
  Points3 out(tmpl.num_keypoints(), 3);
  for (int k = 0; k < tmpl.num_keypoints(); ++k) {
    out.row(k) = keypoint_position(tmpl.keypoints()[k], vertices).transpose();
  }
  return out;
}

TemplateModel::TemplateModel(TemplateData data) : data_(std::move(data)) {
  validate();
  derive();
}

void TemplateModel::validate() const {
  const auto n = data_.vertices.rows();
  const auto nj = data_.joints.rows();
  if (n == 0) fail("vertices: empty");
  if (nj == 0) fail("joints: empty");
  if (!data_.vertices.allFinite()) fail("vertices: non-finite coordinate");
  if (!data_.joints.allFinite()) fail("joints: non-finite coordinate");
  if (static_cast<Eigen::Index>(data_.parent.size()) != nj) fail("parent: size differs from joint count");
  if (!data_.joint_names.empty() && static_cast<Eigen::Index>(data_.joint_names.size()) != nj) {
    fail("joint_names: size differs from joint count");
  }
  for (Eigen::Index f = 0; f < data_.faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int v = data_.faces(f, k);
      if (v < 0 || v >= n) fail("faces: index out of range at face " + std::to_string(f));
    }
  }

  // single rooted tree: exactly one root, every chain reaches it
  int roots = 0;
  for (Eigen::Index j = 0; j < nj; ++j) {
    int p = data_.parent[j];
    if (p < 0) {
      ++roots;
    } else if (p >= nj) {
      fail("parent: index out of range for joint " + std::to_string(j));
    }
  }
  if (roots != 1) fail("parent: expected exactly one root, found " + std::to_string(roots));
  for (Eigen::Index j = 0; j < nj; ++j) {
    int cur = static_cast<int>(j);
    for (Eigen::Index steps = 0; cur >= 0; ++steps) {
      if (steps > nj) fail("parent: cycle through joint " + std::to_string(j));
      cur = data_.parent[cur];
    }
  }

  std::vector<double> row_sum(n, 0.0);
  for (const auto& w : data_.skin_weights) {
    if (w.vertex < 0 || w.vertex >= n) fail("skin_weights: vertex index out of range");
    if (w.joint < 0 || w.joint >= nj) fail("skin_weights: joint index out of range");
    if (!(w.weight >= 0.0) || !std::isfinite(w.weight)) fail("skin_weights: negative or non-finite weight");
    row_sum[w.vertex] += w.weight;
  }
  for (Eigen::Index v = 0; v < n; ++v) {
    if (std::abs(row_sum[v] - 1.0) > 1e-6) {
      fail("skin_weights: row " + std::to_string(v) + " sums to " + std::to_string(row_sum[v]));
    }
  }

  if (data_.keypoints.empty()) fail("keypoint_map: empty");
  for (const auto& kp : data_.keypoints) {
    if (kp.vertices.empty()) fail("keypoint_map: keypoint '" + kp.name + "' has no vertices");
    for (int v : kp.vertices) {
      if (v < 0 || v >= n) fail("keypoint_map: index out of range for '" + kp.name + "'");
    }
  }
  for (const auto& part : data_.parts) {
    if (part.vertices.empty()) fail("part_groups: group '" + part.name + "' is empty");
    for (int v : part.vertices) {
      if (v < 0 || v >= n) fail("part_groups: index out of range in '" + part.name + "'");
    }
    if (part.anchor_joint >= nj) fail("part_groups: anchor joint out of range in '" + part.name + "'");
  }
  for (const char* required : {"beak", "tail"}) {
    auto it = std::find_if(data_.parts.begin(), data_.parts.end(),
                           [&](const PartGroup& p) { return p.name == required; });
    if (it == data_.parts.end()) fail(std::string("part_groups: missing required group '") + required + "'");
    if (it->anchor_joint < 0) fail(std::string("part_groups: group '") + required + "' has no anchor joint");
  }

  std::vector<int> mate(n, -1);
  for (const auto& [p, q] : data_.symmetry_pairs) {
    if (p < 0 || p >= n || q < 0 || q >= n) fail("symmetry_pairs: index out of range");
    if (mate[p] != -1 || mate[q] != -1) {
      fail("symmetry_pairs: vertex appears in more than one pair (not an involution)");
    }
    mate[p] = q;
    mate[q] = p;
  }

  if (data_.rigidity.size() != n) fail("rigidity_weights: size differs from vertex count");
  for (Eigen::Index v = 0; v < n; ++v) {
    if (!(data_.rigidity[v] >= 1.0)) fail("rigidity_weights: value below 1 at vertex " + std::to_string(v));
  }
}

void TemplateModel::derive() {
  const int n = num_vertices();
  const int nj = num_joints();

  edges_ = edges_from_faces(data_.faces);
  neighbors_.assign(n, {});
  for (const auto& e : edges_) {
    neighbors_[e[0]].push_back(e[1]);
    neighbors_[e[1]].push_back(e[0]);
  }

  std::vector<std::vector<int>> children(nj);
  int root = -1;
  for (int j = 0; j < nj; ++j) {
    if (data_.parent[j] < 0) {
      root = j;
    } else {
      children[data_.parent[j]].push_back(j);
    }
  }
  joint_order_.clear();
  joint_order_.push_back(root);
  for (std::size_t i = 0; i < joint_order_.size(); ++i) {
    for (int c : children[joint_order_[i]]) joint_order_.push_back(c);
  }

  skin_rows_.assign(n, {});
  joint_regions_.assign(nj, {});
  std::vector<double> col_sum(nj, 0.0);
  for (const auto& w : data_.skin_weights) {
    if (w.weight == 0.0) continue;
    skin_rows_[w.vertex].push_back({w.joint, w.weight});
    joint_regions_[w.joint].push_back({w.vertex, w.weight});
    col_sum[w.joint] += w.weight;
  }
  for (auto& row : skin_rows_) {
    std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
  }
  for (int j = 0; j < nj; ++j) {
    auto& region = joint_regions_[j];
    std::sort(region.begin(), region.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
    for (auto& e : region) e.weight /= col_sum[j];
  }

  part_axes_.clear();
  for (const auto& part : data_.parts) {
    if (part.anchor_joint < 0) continue;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (int v : part.vertices) centroid += data_.vertices.row(v).transpose();
    centroid /= static_cast<double>(part.vertices.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int v : part.vertices) {
      Eigen::Vector3d d = data_.vertices.row(v).transpose() - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d axis = eig.eigenvectors().col(2);
    Eigen::Vector3d anchor = data_.joints.row(part.anchor_joint).transpose();
    if (axis.dot(centroid - anchor) < 0.0) axis = -axis;
    part_axes_.emplace_back(part.name, axis.normalized());
  }

  Fnv1a h;
  h.value(data_.vertices.rows());
  h.bytes(data_.vertices.data(), sizeof(double) * data_.vertices.size());
  h.value(data_.faces.rows());
  h.bytes(data_.faces.data(), sizeof(int) * data_.faces.size());
  h.value(data_.joints.rows());
  h.bytes(data_.joints.data(), sizeof(double) * data_.joints.size());
  for (int p : data_.parent) h.value(p);
  for (const auto& w : data_.skin_weights) {
    h.value(w.vertex);
    h.value(w.joint);
    h.value(w.weight);
  }
  for (const auto& kp : data_.keypoints) {
    h.text(kp.name);
    for (int v : kp.vertices) h.value(v);
  }
  for (const auto& part : data_.parts) {
    h.text(part.name);
    h.value(part.anchor_joint);
    for (int v : part.vertices) h.value(v);
  }
  for (const auto& [p, q] : data_.symmetry_pairs) {
    h.value(p);
    h.value(q);
  }
  h.bytes(data_.rigidity.data(), sizeof(double) * data_.rigidity.size());
  hash_ = hex64(h.digest());
}

const PartGroup* TemplateModel::find_part(const std::string& name) const {
  for (const auto& p : data_.parts) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const PartGroup& TemplateModel::part(const std::string& name) const {
  const PartGroup* p = find_part(name);
  if (p == nullptr) throw InvalidInput("template: no part group named '" + name + "'");
  return *p;
}

Eigen::Vector3d TemplateModel::part_axis(const std::string& name) const {
  for (const auto& [n, axis] : part_axes_) {
    if (n == name) return axis;
  }
  throw InvalidInput("template: part group '" + name + "' has no anchor joint");
}

int TemplateModel::keypoint_index(const std::string& name) const {
  for (int k = 0; k < num_keypoints(); ++k) {
    if (data_.keypoints[k].name == name) return k;
  }
  return -1;
}

int TemplateModel::joint_index(const std::string& name) const {
  for (int j = 0; j < static_cast<int>(data_.joint_names.size()); ++j) {
    if (data_.joint_names[j] == name) return j;
  }
  return -1;
}

double TemplateModel::body_length() const {
  int beak = keypoint_index("beak_tip");
  int tail = keypoint_index("tail_tip");
  if (beak < 0 || tail < 0) throw InvalidInput("template: body length needs 'beak_tip' and 'tail_tip' keypoints");
  return (keypoint_position(data_.keypoints[beak], data_.vertices) -
          keypoint_position(data_.keypoints[tail], data_.vertices))
      .norm();
}

}  // namespace avishape
