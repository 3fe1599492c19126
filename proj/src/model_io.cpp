#include "convret/model.hpp"

#include "convret/tensor_store.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace convret {

namespace {

using Blobs = std::map<std::string, Matrix>;

Matrix row_of(const Vector& v) { return v.transpose(); }
Matrix dense(const RowMatrix& m) { return m; }

Blobs collect_blobs(const PipelineModel& m) {
  Blobs b;
  b["pca_mean"] = row_of(m.pca.mean);
  b["pca_basis"] = m.pca.basis;
  b["pca_eigenvalues"] = row_of(m.pca.eigenvalues);
  if (m.codebook) b["codebook"] = dense(m.codebook->centroids);
  if (m.gmm) {
    b["gmm_weights"] = row_of(m.gmm->weights);
    b["gmm_means"] = dense(m.gmm->means);
    b["gmm_variances"] = dense(m.gmm->variances);
  }
  if (m.temb) {
    b["temb_mean"] = row_of(m.temb->mean);
    b["temb_drop_basis"] = m.temb->drop_basis;
    b["temb_keep_basis"] = m.temb->keep_basis;
  }
  if (m.rn) {
    b["rn_mean"] = row_of(m.rn->mean);
    b["rn_rotation"] = m.rn->rotation;
    b["rn_eigenvalues"] = row_of(m.rn->eigenvalues);
  }
  if (m.itq) {
    b["itq_mean"] = row_of(m.itq->mean);
    b["itq_pca"] = m.itq->pca;
    b["itq_rotation"] = m.itq->rotation;
  }
  return b;
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream is(to_key_values(cfg));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ModelError(ModelErrorKind::kManifest, "manifest: config value for " + key + " is not a string");
    apply_setting(cfg, key, value.get<std::string>());
  }
  return cfg;
}

void expect_shape(const std::string& name, const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols)
    throw ModelError(ModelErrorKind::kShapeMismatch, "model blob " + name + " is " + std::to_string(m.rows()) + "x" +
                                                         std::to_string(m.cols()) + ", expected " +
                                                         std::to_string(rows) + "x" + std::to_string(cols));
}

void expect_orthonormal(const std::string& name, const Matrix& m) {
  const Matrix gram = m.transpose() * m;
  const double err = (gram - Matrix::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff();
  if (m.cols() > 0 && err > 1e-5)
    throw ModelError(ModelErrorKind::kShapeMismatch, "model blob " + name + " is not orthonormal (error " +
                                                         std::to_string(err) + ")");
}

}  // namespace

std::filesystem::path save_model(const PipelineModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Blobs blobs = collect_blobs(m);

  nlohmann::json manifest;
  manifest["format_version"] = std::string(kModelFormatVersion);
  manifest["config"] = config_to_json(m.config);
  manifest["input_channels"] = m.input_channels;
  manifest["embedding_dim"] = m.config.embedding_dim();
  manifest["final_dim"] = m.config.final_dim();
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& [name, mat] : blobs) {
    shapes[name] = {mat.rows(), mat.cols()};
    save_matrix(mat, dir / (name + ".mat"));
  }
  manifest["blobs"] = shapes;

  const auto path = dir / "manifest.json";
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError(ParseErrorKind::kIo, "cannot write " + path.string());
  os << manifest.dump(2) << '\n';
  if (!os) throw ParseError(ParseErrorKind::kIo, "write failed: " + path.string());
  return path;
}

PipelineModel load_model(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw ModelError(ModelErrorKind::kMissingBlob, "missing model manifest " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(ModelErrorKind::kManifest, "malformed manifest " + path.string() + ": " + e.what());
  }
  if (!manifest.contains("format_version") || manifest["format_version"] != kModelFormatVersion)
    throw ModelError(ModelErrorKind::kVersionMismatch,
                     "model format version mismatch in " + path.string() + " (expected " +
                         std::string(kModelFormatVersion) + ")");
  if (!manifest.contains("config") || !manifest.contains("blobs") || !manifest.contains("input_channels"))
    throw ModelError(ModelErrorKind::kManifest, "manifest " + path.string() + " lacks config/blobs/input_channels");

  PipelineModel m;
  try {
    m.config = config_from_json(manifest["config"]);
    m.config.validate();
  } catch (const ConfigError& e) {
    throw ModelError(ModelErrorKind::kManifest, std::string("manifest config: ") + e.what());
  }
  m.input_channels = manifest["input_channels"].get<std::uint32_t>();
  const auto& shapes = manifest["blobs"];

  const auto blob = [&](const std::string& name) -> Matrix {
    if (!shapes.contains(name)) throw ModelError(ModelErrorKind::kMissingBlob, "manifest lists no blob " + name);
    const auto file = dir / (name + ".mat");
    if (!std::filesystem::exists(file))
      throw ModelError(ModelErrorKind::kMissingBlob, "missing model blob " + file.string());
    Matrix mat = load_matrix(file);
    const auto& shape = shapes[name];
    expect_shape(name, mat, shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>());
    return mat;
  };
  const auto vec = [&](const std::string& name, Eigen::Index n) -> Vector {
    Matrix mat = blob(name);
    expect_shape(name, mat, 1, n);
    return mat.transpose();
  };

  const auto& cfg = m.config;
  const Eigen::Index k_in = m.input_channels;
  const Eigen::Index d = cfg.dim;
  const Eigen::Index c = cfg.codebook_size;

  m.pca.basis = blob("pca_basis");
  expect_shape("pca_basis", m.pca.basis, k_in, d);
  expect_orthonormal("pca_basis", m.pca.basis);
  m.pca.mean = vec("pca_mean", k_in);
  m.pca.eigenvalues = vec("pca_eigenvalues", d);

  if (cfg.embed == EmbedKind::kFv) {
    DiagonalGmm g;
    g.weights = vec("gmm_weights", c);
    g.means = blob("gmm_means");
    expect_shape("gmm_means", g.means, c, d);
    g.variances = blob("gmm_variances");
    expect_shape("gmm_variances", g.variances, c, d);
    m.gmm = std::move(g);
  } else {
    Codebook cb;
    cb.centroids = blob("codebook");
    expect_shape("codebook", cb.centroids, c, d);
    m.codebook = std::move(cb);
  }
  if (cfg.embed == EmbedKind::kTemb) {
    const Eigen::Index raw = d * c;
    const Eigen::Index e = cfg.drop;
    TembProjection p;
    p.mean = vec("temb_mean", raw);
    p.drop_basis = blob("temb_drop_basis");
    expect_shape("temb_drop_basis", p.drop_basis, raw, e);
    p.keep_basis = blob("temb_keep_basis");
    expect_shape("temb_keep_basis", p.keep_basis, raw, raw - e);
    expect_orthonormal("temb_keep_basis", p.keep_basis);
    m.temb = std::move(p);
  }

  const auto emb = static_cast<Eigen::Index>(cfg.embedding_dim());
  const auto fin = static_cast<Eigen::Index>(cfg.final_dim());
  if (cfg.rn.enabled) {
    RnModel rn;
    rn.mean = vec("rn_mean", emb);
    rn.rotation = blob("rn_rotation");
    expect_shape("rn_rotation", rn.rotation, emb, fin);
    expect_orthonormal("rn_rotation", rn.rotation);
    rn.eigenvalues = vec("rn_eigenvalues", fin);
    rn.whiten = cfg.rn.whiten;
    rn.epsilon = cfg.rn.epsilon;
    m.rn = std::move(rn);
  }
  if (cfg.bits > 0) {
    const Eigen::Index l = cfg.bits;
    ItqModel itq;
    itq.mean = vec("itq_mean", fin);
    itq.pca = blob("itq_pca");
    expect_shape("itq_pca", itq.pca, fin, l);
    expect_orthonormal("itq_pca", itq.pca);
    itq.rotation = blob("itq_rotation");
    expect_shape("itq_rotation", itq.rotation, l, l);
    expect_orthonormal("itq_rotation", itq.rotation);
    m.itq = std::move(itq);
  }
  return m;
}

}  // namespace convret
