#include "avishape/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace avishape {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidInput(what + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw InvalidInput(what + ": '" + s + "' is not a number");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

template <typename T>
T field(const json& j, const std::string& key, const fs::path& path) {
  if (!j.contains(key)) throw InvalidInput(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(path.string() + ": field '" + key + "' has the wrong type");
  }
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j, const std::string& key, const fs::path& path) {
  const auto v = field<std::vector<double>>(j, key, path);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Arrays stored beside a JSON header.
json store_array(const fs::path& header, const std::string& name, const Eigen::MatrixXd& m) {
  const std::string file = header.stem().string() + "." + name + ".f64";
  write_blob(header.parent_path() / file, m.data(), static_cast<std::size_t>(m.size()));
  return {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
}

Eigen::MatrixXd load_array(const fs::path& header, const json& arrays, const std::string& name) {
  if (!arrays.contains(name)) throw InvalidInput(header.string() + ": missing array '" + name + "'");
  const json& a = arrays.at(name);
  const auto rows = field<Eigen::Index>(a, "rows", header), cols = field<Eigen::Index>(a, "cols", header);
  const auto file = field<std::string>(a, "file", header);
  if (file.find('/') != std::string::npos || file.find('\\') != std::string::npos) {
    throw InvalidInput(header.string() + ": array file '" + file + "' must sit next to the header");
  }
  const std::vector<double> data = read_blob(header.parent_path() / file);
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw InvalidInput(header.string() + ": array '" + name + "' has " + std::to_string(data.size()) +
                       " values, header says " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json pca_arrays(const fs::path& header, const std::string& prefix, const Pca& p) {
  return {{prefix + "mean", store_array(header, prefix + "mean", p.mean)},
          {prefix + "components", store_array(header, prefix + "components", p.components)},
          {prefix + "variances", store_array(header, prefix + "variances", p.variances)}};
}

Pca load_pca(const fs::path& header, const json& arrays, const std::string& prefix) {
  Pca p;
  p.mean = load_array(header, arrays, prefix + "mean");
  p.components = load_array(header, arrays, prefix + "components");
  p.variances = load_array(header, arrays, prefix + "variances");
  if (p.components.cols() != p.variances.size() || (p.components.cols() > 0 && p.components.rows() != p.mean.size())) {
    throw InvalidInput(header.string() + ": inconsistent PCA shapes");
  }
  return p;
}

json pose_json(const PoseParams& p) {
  return {{"theta", vec_json(p.theta)},
          {"alpha", vec_json(p.alpha)},
          {"gamma", vec_json(p.gamma)},
          {"kappa", vec_json(p.kappa)}};
}

PoseParams json_pose(const json& j, const fs::path& path) {
  PoseParams p;
  p.theta = json_vec(j, "theta", path);
  p.alpha = json_vec(j, "alpha", path);
  const Eigen::VectorXd g = json_vec(j, "gamma", path), k = json_vec(j, "kappa", path);
  if (g.size() != 3 || k.size() != 2 || p.theta.size() != 3 * p.alpha.size()) {
    throw InvalidInput(path.string() + ": pose arrays have inconsistent sizes");
  }
  p.gamma = g;
  p.kappa = k;
  return p;
}

std::string csv_escape_check(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) throw InvalidInput("csv: value '" + s + "' needs quoting");
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

void write_blob(const fs::path& path, const double* data, std::size_t count) {
  std::string bytes(count * sizeof(double), '\0');
  if (count) std::memcpy(bytes.data(), data, bytes.size());
  write_atomic(path, bytes);
}

std::vector<double> read_blob(const fs::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % sizeof(double)) throw InvalidInput(path.string() + ": size is not a multiple of 8 bytes");
  std::vector<double> out(bytes.size() / sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

// ---------------------------------------------------------------------------

void write_obj(const fs::path& path, const Points3& vertices, const Faces& faces) {
  std::string s;
  s.reserve(static_cast<std::size_t>(vertices.rows() * 64 + faces.rows() * 24));
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    s += "v " + fmt17(vertices(i, 0)) + " " + fmt17(vertices(i, 1)) + " " + fmt17(vertices(i, 2)) + "\n";
  }
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    s += "f " + std::to_string(faces(f, 0) + 1) + " " + std::to_string(faces(f, 1) + 1) + " " +
         std::to_string(faces(f, 2) + 1) + "\n";
  }
  write_atomic(path, s);
}

void read_obj(const fs::path& path, Points3& vertices, Faces& faces) {
  std::istringstream in(read_text(path));
  std::vector<Eigen::RowVector3d> vs;
  std::vector<Eigen::RowVector3i> fs_;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (tag == "v") {
      std::string a, b, c;
      if (!(ls >> a >> b >> c)) throw InvalidInput(where + ": vertex needs 3 coordinates");
      vs.emplace_back(parse_double(a, where), parse_double(b, where), parse_double(c, where));
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int v = 0;
        try {
          v = std::stoi(head);
        } catch (const std::exception&) {
          throw InvalidInput(where + ": bad face index '" + tok + "'");
        }
        idx.push_back(v);
      }
      if (idx.size() != 3) throw InvalidInput(where + ": only triangles are supported");
      fs_.emplace_back(idx[0] - 1, idx[1] - 1, idx[2] - 1);
    }
  }
  vertices.resize(static_cast<Eigen::Index>(vs.size()), 3);
  for (std::size_t i = 0; i < vs.size(); ++i) vertices.row(static_cast<Eigen::Index>(i)) = vs[i];
  faces.resize(static_cast<Eigen::Index>(fs_.size()), 3);
  for (std::size_t i = 0; i < fs_.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      if (fs_[i][k] < 0 || fs_[i][k] >= vertices.rows()) {
        throw InvalidInput(path.string() + ": face " + std::to_string(i) + " references a missing vertex");
      }
    }
    faces.row(static_cast<Eigen::Index>(i)) = fs_[i];
  }
}

void write_template(const fs::path& obj_path, const TemplateData& d) {
  write_obj(obj_path, d.vertices, d.faces);
  json j;
  json joints = json::array();
  for (Eigen::Index k = 0; k < d.joints.rows(); ++k) {
    joints.push_back({{"name", d.joint_names[static_cast<std::size_t>(k)]},
                      {"position", {d.joints(k, 0), d.joints(k, 1), d.joints(k, 2)}},
                      {"parent", d.parent[static_cast<std::size_t>(k)]}});
  }
  j["joints"] = joints;
  json skin = json::array();
  for (const auto& w : d.skin_weights) skin.push_back({w.vertex, w.joint, w.weight});
  j["skin_weights"] = skin;
  json kps = json::array();
  for (const auto& k : d.keypoints) kps.push_back({{"name", k.name}, {"vertices", k.vertices}});
  j["keypoint_map"] = kps;
  json parts = json::array();
  for (const auto& p : d.parts) parts.push_back({{"name", p.name}, {"vertices", p.vertices}, {"anchor_joint", p.anchor_joint}});
  j["part_groups"] = parts;
  json sym = json::array();
  for (const auto& [p, q] : d.symmetry_pairs) sym.push_back({p, q});
  j["symmetry_pairs"] = sym;
  j["rigidity_weights"] = vec_json(d.rigidity);
  fs::path side = obj_path;
  side.replace_extension(".json");
  write_atomic(side, j.dump(1) + "\n");
}

TemplateData read_template(const fs::path& obj_path) {
  TemplateData d;
  read_obj(obj_path, d.vertices, d.faces);
  fs::path side = obj_path;
  side.replace_extension(".json");
  const json j = parse_json(side);
  try {
    const json& joints = j.at("joints");
    d.joints.resize(static_cast<Eigen::Index>(joints.size()), 3);
    for (std::size_t k = 0; k < joints.size(); ++k) {
      const auto pos = joints[k].at("position").get<std::vector<double>>();
      if (pos.size() != 3) throw InvalidInput(side.string() + ": joint position needs 3 values");
      d.joints.row(static_cast<Eigen::Index>(k)) << pos[0], pos[1], pos[2];
      d.joint_names.push_back(joints[k].at("name").get<std::string>());
      d.parent.push_back(joints[k].at("parent").get<int>());
    }
    for (const auto& w : j.at("skin_weights")) d.skin_weights.push_back({w.at(0).get<int>(), w.at(1).get<int>(), w.at(2).get<double>()});
    for (const auto& k : j.at("keypoint_map")) d.keypoints.push_back({k.at("name"), k.at("vertices").get<std::vector<int>>()});
    for (const auto& p : j.at("part_groups")) {
      d.parts.push_back({p.at("name"), p.at("vertices").get<std::vector<int>>(), p.value("anchor_joint", -1)});
    }
    for (const auto& s : j.at("symmetry_pairs")) d.symmetry_pairs.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
    d.rigidity = json_vec(j, "rigidity_weights", side);
  } catch (const json::exception& e) {
    throw InvalidInput(side.string() + ": " + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------

void write_pgm(const fs::path& path, const BinaryMask& mask) {
  std::string s = "P5\n" + std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) + "\n255\n";
  const std::size_t off = s.size();
  s.resize(off + static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) s[off + static_cast<std::size_t>(i)] = mask.data()[i] ? '\xff' : '\0';
  write_atomic(path, s);
}

void write_pgm(const fs::path& path, const Image& image) {
  std::string s = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  const std::size_t off = s.size();
  s.resize(off + static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double v = std::clamp(std::round(255.0 * image.data()[i]), 0.0, 255.0);
    s[off + static_cast<std::size_t>(i)] = static_cast<char>(static_cast<unsigned char>(v));
  }
  write_atomic(path, s);
}

BinaryMask read_pgm(const fs::path& path) {
  const std::string s = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t b = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(b, pos - b);
  };
  if (token() != "P5") throw InvalidInput(path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw InvalidInput(path.string() + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw InvalidInput(path.string() + ": unsupported PGM header");
  ++pos;  // single whitespace before the raster
  if (s.size() - std::min(pos, s.size()) != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw InvalidInput(path.string() + ": raster size does not match the header");
  }
  BinaryMask m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s[pos + static_cast<std::size_t>(i)] != '\0';
  return m;
}

// ---------------------------------------------------------------------------

void write_manifest(const fs::path& path, const Manifest& m) {
  json j;
  j["template_hash"] = m.template_hash;
  j["camera"] = {{"focal", m.camera.focal},
                 {"principal", {m.camera.principal[0], m.camera.principal[1]}},
                 {"width", m.camera.width},
                 {"height", m.camera.height}};
  json inst = json::array();
  for (const auto& a : m.instances) {
    json kps = json::array();
    for (Eigen::Index k = 0; k < a.keypoints.rows(); ++k) {
      kps.push_back({a.keypoints(k, 0), a.keypoints(k, 1), a.visible[static_cast<std::size_t>(k)] ? 1 : 0});
    }
    const std::string mask = "masks/" + a.id + ".pgm";
    write_pgm(path.parent_path() / mask, a.mask);
    inst.push_back({{"id", a.id},
                    {"species", a.species},
                    {"keypoints", kps},
                    {"mask", mask},
                    {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}}});
  }
  j["instances"] = inst;
  write_atomic(path, j.dump(1) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  const json j = parse_json(path);
  Manifest m;
  m.template_hash = field<std::string>(j, "template_hash", path);
  const json cam = field<json>(j, "camera", path);
  m.camera.focal = field<double>(cam, "focal", path);
  const auto pp = field<std::vector<double>>(cam, "principal", path);
  if (pp.size() != 2) throw InvalidInput(path.string() + ": camera principal needs 2 values");
  m.camera.principal = {pp[0], pp[1]};
  m.camera.width = field<int>(cam, "width", path);
  m.camera.height = field<int>(cam, "height", path);
  m.camera.validate();
  std::vector<std::string> seen;
  for (const auto& e : field<json>(j, "instances", path)) {
    AnnotatedInstance a;
    a.id = field<std::string>(e, "id", path);
    if (a.id.empty() || a.id.find('/') != std::string::npos) throw InvalidInput(path.string() + ": bad instance id '" + a.id + "'");
    if (std::find(seen.begin(), seen.end(), a.id) != seen.end()) throw InvalidInput(path.string() + ": duplicate instance id '" + a.id + "'");
    seen.push_back(a.id);
    a.species = field<std::string>(e, "species", path);
    const auto kps = field<std::vector<std::vector<double>>>(e, "keypoints", path);
    a.keypoints.resize(static_cast<Eigen::Index>(kps.size()), 2);
    for (std::size_t k = 0; k < kps.size(); ++k) {
      if (kps[k].size() != 3) throw InvalidInput(path.string() + ": instance '" + a.id + "' keypoint needs [x, y, visible]");
      a.keypoints.row(static_cast<Eigen::Index>(k)) << kps[k][0], kps[k][1];
      a.visible.push_back(kps[k][2] != 0.0);
    }
    const auto box = field<std::vector<double>>(e, "bbox", path);
    if (box.size() != 4) throw InvalidInput(path.string() + ": instance '" + a.id + "' bbox needs 4 values");
    a.bbox = {box[0], box[1], box[2], box[3]};
    a.mask = read_pgm(path.parent_path() / field<std::string>(e, "mask", path));
    a.validate(m.camera.width, m.camera.height);
    m.instances.push_back(std::move(a));
  }
  return m;
}

// ---------------------------------------------------------------------------

void write_params(const fs::path& path, const ParamsFile& p) {
  json j = pose_json(p.params);
  j["id"] = p.id;
  j["beta"] = vec_json(p.beta);
  j["pck"] = p.pck;
  j["iou"] = p.iou;
  j["failed"] = p.failed;
  j["failure"] = p.failure;
  write_atomic(path, j.dump(1) + "\n");
}

ParamsFile read_params(const fs::path& path) {
  const json j = parse_json(path);
  ParamsFile p;
  p.id = field<std::string>(j, "id", path);
  p.params = json_pose(j, path);
  p.beta = json_vec(j, "beta", path);
  p.pck = field<double>(j, "pck", path);
  p.iou = field<double>(j, "iou", path);
  p.failed = field<bool>(j, "failed", path);
  p.failure = field<std::string>(j, "failure", path);
  return p;
}

// ---------------------------------------------------------------------------

void write_species_model(const fs::path& path, const SpeciesModel& m) {
  json j;
  j["kind"] = "species";
  j["species"] = m.species;
  j["template_hash"] = m.template_hash;
  j["instance_ids"] = m.instance_ids;
  json arrays = {{"dv", store_array(path, "dv", m.dv)},
                 {"basis", store_array(path, "basis", m.basis)},
                 {"betas", store_array(path, "betas", m.betas)}};
  arrays.update(pca_arrays(path, "pca_", m.pca));
  j["arrays"] = arrays;
  write_atomic(path, j.dump(1) + "\n");
}

SpeciesModel read_species_model(const fs::path& path) {
  const json j = parse_json(path);
  if (field<std::string>(j, "kind", path) != "species") throw InvalidInput(path.string() + ": not a species model");
  SpeciesModel m;
  m.species = field<std::string>(j, "species", path);
  m.template_hash = field<std::string>(j, "template_hash", path);
  m.instance_ids = field<std::vector<std::string>>(j, "instance_ids", path);
  const json arrays = field<json>(j, "arrays", path);
  m.dv = load_array(path, arrays, "dv");
  m.basis = load_array(path, arrays, "basis");
  m.betas = load_array(path, arrays, "betas");
  m.pca = load_pca(path, arrays, "pca_");
  if (m.basis.cols() > 0 && m.basis.rows() != m.dv.size()) throw InvalidInput(path.string() + ": basis rows differ from dv");
  return m;
}

void write_multispecies_model(const fs::path& path, const MultiSpeciesModel& m) {
  json j;
  j["kind"] = "multispecies";
  j["template_hash"] = m.template_hash;
  j["normalized"] = m.normalized;
  j["species"] = m.species;
  json arrays = {{"coefficients", store_array(path, "coefficients", m.coefficients)}};
  arrays.update(pca_arrays(path, "pca_", m.pca));
  j["arrays"] = arrays;
  write_atomic(path, j.dump(1) + "\n");
}

MultiSpeciesModel read_multispecies_model(const fs::path& path) {
  const json j = parse_json(path);
  if (field<std::string>(j, "kind", path) != "multispecies") throw InvalidInput(path.string() + ": not a multi-species model");
  MultiSpeciesModel m;
  m.template_hash = field<std::string>(j, "template_hash", path);
  m.normalized = field<bool>(j, "normalized", path);
  m.species = field<std::vector<std::string>>(j, "species", path);
  const json arrays = field<json>(j, "arrays", path);
  m.coefficients = load_array(path, arrays, "coefficients");
  m.pca = load_pca(path, arrays, "pca_");
  return m;
}

std::string model_kind(const fs::path& path) { return field<std::string>(parse_json(path), "kind", path); }

void check_template_hash(const std::string& expected, const std::string& found, const std::string& what) {
  if (expected != found) {
    throw InvalidInput("template hash mismatch: " + what + " has " + found + ", expected " + expected);
  }
}

void write_prior(const fs::path& path, const PosePrior& prior) {
  json j;
  j["kind"] = "prior";
  j["arrays"] = {{"theta_mean", store_array(path, "theta_mean", prior.theta_mean())},
                 {"theta_cov", store_array(path, "theta_cov", prior.theta_cov())},
                 {"alpha_mean", store_array(path, "alpha_mean", prior.alpha_mean())},
                 {"alpha_cov", store_array(path, "alpha_cov", prior.alpha_cov())}};
  write_atomic(path, j.dump(1) + "\n");
}

PosePrior read_prior(const fs::path& path) {
  const json j = parse_json(path);
  if (field<std::string>(j, "kind", path) != "prior") throw InvalidInput(path.string() + ": not a pose prior");
  const json arrays = field<json>(j, "arrays", path);
  return PosePrior(load_array(path, arrays, "theta_mean"), load_array(path, arrays, "theta_cov"),
                   load_array(path, arrays, "alpha_mean"), load_array(path, arrays, "alpha_cov"));
}

// ---------------------------------------------------------------------------

void write_ground_truth(const fs::path& path, const SyntheticGroundTruth& t, const std::vector<std::string>& ids) {
  if (ids.size() != t.poses.size()) throw InvalidInput("ground truth: one id per pose is required");
  json j;
  j["kind"] = "ground_truth";
  j["ids"] = ids;
  json poses = json::array();
  for (const auto& p : t.poses) poses.push_back(pose_json(p));
  j["poses"] = poses;
  json arrays = {{"dv", store_array(path, "dv", t.dv)},
                 {"basis", store_array(path, "basis", t.basis)},
                 {"betas", store_array(path, "betas", t.betas)}};
  Eigen::MatrixXd kp(static_cast<Eigen::Index>(t.true_keypoints.size()),
                     t.true_keypoints.empty() ? 0 : t.true_keypoints.front().size());
  for (std::size_t i = 0; i < t.true_keypoints.size(); ++i) {
    kp.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(t.true_keypoints[i].data(), kp.cols());
  }
  arrays["true_keypoints"] = store_array(path, "true_keypoints", kp);
  j["arrays"] = arrays;
  write_atomic(path, j.dump(1) + "\n");
  for (std::size_t i = 0; i < t.true_masks.size(); ++i) {
    write_pgm(path.parent_path() / "truth_masks" / (ids[i] + ".pgm"), t.true_masks[i]);
  }
}

SyntheticGroundTruth read_ground_truth(const fs::path& path, std::vector<std::string>* ids_out) {
  const json j = parse_json(path);
  if (field<std::string>(j, "kind", path) != "ground_truth") throw InvalidInput(path.string() + ": not a ground-truth file");
  SyntheticGroundTruth t;
  const auto ids = field<std::vector<std::string>>(j, "ids", path);
  for (const auto& p : field<json>(j, "poses", path)) t.poses.push_back(json_pose(p, path));
  const json arrays = field<json>(j, "arrays", path);
  t.dv = load_array(path, arrays, "dv");
  t.basis = load_array(path, arrays, "basis");
  t.betas = load_array(path, arrays, "betas");
  const Eigen::MatrixXd kp = load_array(path, arrays, "true_keypoints");
  for (Eigen::Index i = 0; i < kp.rows(); ++i) {
    const Eigen::RowVectorXd r = kp.row(i);
    t.true_keypoints.push_back(Eigen::Map<const Points2>(r.data(), kp.cols() / 2, 2));
  }
  for (const auto& id : ids) t.true_masks.push_back(read_pgm(path.parent_path() / "truth_masks" / (id + ".pgm")));
  if (ids_out) *ids_out = ids;
  return t;
}

// ---------------------------------------------------------------------------

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput(source + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidInput(source + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) { return parse_key_values(read_text(path), path.string()); }

std::string format_key_values(const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const double v = parse_double(it->second, "config key '" + key + "'");
  if (!std::isfinite(v)) throw InvalidInput("config key '" + key + "': value must be finite");
  return v;
}

int kv_int(const KeyValues& kv, const std::string& key, int fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) throw InvalidInput("config key '" + key + "': '" + it->second + "' is not an integer");
  return v;
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw InvalidInput("config key '" + key + "': '" + it->second + "' is not a boolean");
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::vector<double> kv_doubles(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<double> out;
  std::istringstream in(it->second);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(parse_double(trim(tok), "config key '" + key + "'"));
  return out;
}

EnergyWeights energy_weights_from(const KeyValues& kv, EnergyWeights w) {
  w.w_kp = kv_double(kv, "w_kp", w.w_kp);
  w.w_msk = kv_double(kv, "w_msk", w.w_msk);
  w.w_prior = kv_double(kv, "w_prior", w.w_prior);
  w.w_edge = kv_double(kv, "w_edge", w.w_edge);
  w.w_lap = kv_double(kv, "w_lap", w.w_lap);
  w.w_arap = kv_double(kv, "w_arap", w.w_arap);
  w.w_sym = kv_double(kv, "w_sym", w.w_sym);
  w.w_ortho = kv_double(kv, "w_ortho", w.w_ortho);
  w.gm_sigma_fraction = kv_double(kv, "gm_sigma_fraction", w.gm_sigma_fraction);
  w.huber_delta = kv_double(kv, "huber_delta", w.huber_delta);
  w.validate();
  return w;
}

SyntheticSpeciesSpec synthetic_spec_from(const KeyValues& kv) {
  SyntheticSpeciesSpec s;
  s.species = kv_string(kv, "species", s.species);
  s.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", static_cast<int>(s.seed)));
  const std::string mean = kv_string(kv, "mean", "");
  std::istringstream in(mean);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw InvalidInput("config key 'mean': expected recipe:magnitude, got '" + tok + "'");
    s.mean_recipes.push_back({trim(tok.substr(0, colon)), parse_double(trim(tok.substr(colon + 1)), "config key 'mean'")});
  }
  std::istringstream vin(kv_string(kv, "variation", ""));
  while (std::getline(vin, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) s.variation_recipes.push_back(tok);
  }
  s.variation_magnitude = kv_double(kv, "variation_magnitude", s.variation_magnitude);
  s.instances = kv_int(kv, "instances", s.instances);
  s.pose_scale = kv_double(kv, "pose_scale", s.pose_scale);
  s.keypoint_noise_px = kv_double(kv, "keypoint_noise_px", s.keypoint_noise_px);
  s.mask_noise_px = kv_int(kv, "mask_noise_px", s.mask_noise_px);
  s.image_size = kv_int(kv, "image_size", s.image_size);
  s.position_jitter = kv_double(kv, "position_jitter", s.position_jitter);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

std::string format_csv(const CsvTable& t) {
  std::string s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + csv_escape_check(cells[i]);
    s += "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return s;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(trim(c));
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw InvalidInput("csv line " + std::to_string(lineno) + ": wrong number of columns");
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw InvalidInput("csv: empty table");
  return t;
}

void write_traits_csv(const fs::path& path, const std::vector<std::string>& species, const Eigen::MatrixXd& traits,
                      const std::vector<std::string>& columns) {
  if (static_cast<Eigen::Index>(species.size()) != traits.rows()) throw InvalidInput("traits: one species per row is required");
  CsvTable t;
  t.header.push_back("species");
  for (Eigen::Index c = 0; c < traits.cols(); ++c) {
    t.header.push_back(static_cast<std::size_t>(c) < columns.size() ? columns[static_cast<std::size_t>(c)] : "d" + std::to_string(c));
  }
  for (Eigen::Index i = 0; i < traits.rows(); ++i) {
    std::vector<std::string> r{species[static_cast<std::size_t>(i)]};
    for (Eigen::Index c = 0; c < traits.cols(); ++c) r.push_back(fmt17(traits(i, c)));
    t.rows.push_back(std::move(r));
  }
  write_atomic(path, format_csv(t));
}

void read_traits_csv(const fs::path& path, std::vector<std::string>& species, Eigen::MatrixXd& traits) {
  const CsvTable t = parse_csv(read_text(path));
  if (t.header.size() < 2) throw InvalidInput(path.string() + ": needs a species column and at least one trait");
  species.clear();
  traits.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size() - 1));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    species.push_back(t.rows[i][0]);
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      const double v = parse_double(t.rows[i][c], path.string() + " row " + std::to_string(i + 1));
      if (!std::isfinite(v)) throw InvalidInput(path.string() + ": traits must be finite");
      traits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - 1)) = v;
    }
  }
}

std::string scatter_svg(const std::vector<std::string>& labels, const Eigen::MatrixXd& xy, const std::string& title) {
  if (xy.cols() != 2 || static_cast<Eigen::Index>(labels.size()) != xy.rows()) throw InvalidInput("scatter: needs S x 2 points and S labels");
  const double size = 480.0, pad = 60.0;
  Eigen::Vector2d lo(0, 0), hi(1, 1);
  if (xy.rows() > 0) {
    lo = xy.colwise().minCoeff().transpose();
    hi = xy.colwise().maxCoeff().transpose();
  }
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
  auto escape = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\"" << size + 2 * pad
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" << pad << "\" y=\"" << pad / 2
    << "\" font-family=\"sans-serif\" font-size=\"16\">" << escape(title) << "</text>\n";
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    const double x = pad + (xy(i, 0) - lo[0]) / span * size, y = pad + size - (xy(i, 1) - lo[1]) / span * size;
    o << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"steelblue\"/>\n<text x=\"" << x + 6 << "\" y=\""
      << y - 6 << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(labels[static_cast<std::size_t>(i)])
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace avishape
