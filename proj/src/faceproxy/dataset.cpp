#include "hav/faceproxy/dataset.hpp"

#include "hav/diffcore/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hav::faceproxy {

namespace fs = std::filesystem;
using diff::Rng;

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct Trajectory {
  // sum of two incommensurate sinusoids per channel
  Eigen::VectorXd amp1, amp2, freq1, freq2, phase1, phase2;

  static Trajectory make(Rng& rng, int dims, double amp) {
    Trajectory t;
    t.amp1.resize(dims);
    t.amp2.resize(dims);
    t.freq1.resize(dims);
    t.freq2.resize(dims);
    t.phase1.resize(dims);
    t.phase2.resize(dims);
    for (int i = 0; i < dims; ++i) {
      double split = rng.uniform(0.55, 0.8);
      t.amp1[i] = amp * split * rng.uniform(0.7, 1.0);
      t.amp2[i] = amp * (1.0 - split);
      t.freq1[i] = rng.uniform(0.8, 2.2);
      t.freq2[i] = rng.uniform(2.4, 5.0);
      t.phase1[i] = rng.uniform(0.0, kTau);
      t.phase2[i] = rng.uniform(0.0, kTau);
    }
    return t;
  }

  Eigen::VectorXd at(double u) const { // u in [0,1] over the sequence
    Eigen::VectorXd v(amp1.size());
    for (int i = 0; i < amp1.size(); ++i)
      v[i] = amp1[i] * std::sin(kTau * freq1[i] * u + phase1[i]) +
             amp2[i] * std::sin(kTau * freq2[i] * u + phase2[i]);
    return v;
  }
};

void fmt_values(std::ostream& os, const char* key, const double* v, int n) {
  os << key << " =";
  os.precision(17);
  for (int i = 0; i < n; ++i) os << " " << v[i];
  os << "\n";
}

} // namespace

Dataset synth_dataset(const SynthConfig& cfg) {
  Dataset ds;
  ds.cfg = cfg;
  ds.model = make_head_model(cfg.K);
  ds.torso = make_torso_mesh();

  for (int i = 0; i < cfg.cameras; ++i) {
    double angle = cfg.cameras == 1 ? 0.0 : (i - (cfg.cameras - 1) / 2.0) * 0.5;
    Vec3 pos(2.4 * std::sin(angle), 0.25, 2.4 * std::cos(angle));
    ds.cameras.push_back(Camera::look_at(pos, Vec3(0, -0.12, 0), Vec3(0, 1, 0),
                                         1.15 * cfg.image_size, cfg.image_size,
                                         cfg.image_size));
  }

  Rng rng(cfg.seed);
  Trajectory expr = Trajectory::make(rng, cfg.K, cfg.amp_delta);
  Trajectory rot = Trajectory::make(rng, 3, cfg.amp_rot);
  Trajectory trans = Trajectory::make(rng, 3, cfg.amp_trans);

  int main_frames = cfg.frames - cfg.tail_frames;
  for (int t = 0; t < cfg.frames; ++t) {
    FrameRecord rec;
    rec.index = t;
    double u = double(t) / std::max(1, cfg.frames - 1);
    rec.delta = expr.at(u);
    if (t >= main_frames && cfg.tail_delta_norm > 0.0) {
      double norm = rec.delta.lpNorm<Eigen::Infinity>();
      if (norm > 1e-9) rec.delta *= cfg.tail_delta_norm / norm;
    }
    rec.pose_clean.rotation = rot.at(u);
    rec.pose_clean.translation = trans.at(u);
    if (t >= main_frames && cfg.tail_pose_scale != 1.0) {
      // fixed extrapolated magnitude, trajectory direction
      auto renorm = [](Vec3 v, double target, const Vec3& fallback) {
        if (v.norm() < 1e-9) v = fallback;
        return Vec3(v.normalized() * target);
      };
      rec.pose_clean.rotation =
          renorm(rec.pose_clean.rotation, cfg.amp_rot * cfg.tail_pose_scale,
                 Vec3(0.2, 1.0, 0.1));
      rec.pose_clean.translation =
          renorm(rec.pose_clean.translation,
                 cfg.amp_trans * cfg.tail_pose_scale, Vec3(1.0, 0.3, 0.4));
    }
    if (cfg.pose_expr_coupled && t < main_frames && cfg.amp_delta > 0) {
      double rs = cfg.amp_rot / cfg.amp_delta;
      double ts = cfg.amp_trans / cfg.amp_delta;
      rec.pose_clean.rotation =
          Vec3(rec.delta[0 % cfg.K], rec.delta[1 % cfg.K],
               0.3 * rec.delta[2 % cfg.K]) * rs;
      rec.pose_clean.translation =
          Vec3(rec.delta[3 % cfg.K], 0.4 * rec.delta[4 % cfg.K],
               rec.delta[5 % cfg.K]) * ts;
    }

    rec.delta_noisy = rec.delta;
    rec.pose_noisy = rec.pose_clean;
    for (int k = 0; k < cfg.K; ++k)
      rec.delta_noisy[k] += cfg.sigma_delta * rng.normal();
    for (int k = 0; k < 3; ++k) {
      rec.pose_noisy.rotation[k] += cfg.sigma_pose * rng.normal();
      rec.pose_noisy.translation[k] += cfg.sigma_pose * rng.normal();
    }
    ds.frames.push_back(std::move(rec));
  }

  ds.images.resize(cfg.frames);
  ds.masks.resize(cfg.frames);
  for (int t = 0; t < cfg.frames; ++t) {
    Mesh head = apply_pose(deform_mesh(ds.model, ds.frames[t].delta),
                           ds.frames[t].pose_clean);
    for (int i = 0; i < cfg.cameras; ++i) {
      Image rgb, mask;
      render_scene({&head, &ds.torso}, ds.cameras[i], ds.shading, rgb, mask);
      ds.images[t].push_back(std::move(rgb));
      ds.masks[t].push_back(std::move(mask));
    }
  }
  return ds;
}

void write_frame_params(const std::string& path, const FrameRecord& rec) {
  std::ostringstream os;
  fmt_values(os, "delta", rec.delta.data(), int(rec.delta.size()));
  fmt_values(os, "delta_noisy", rec.delta_noisy.data(),
             int(rec.delta_noisy.size()));
  double pc[6] = {rec.pose_clean.rotation[0],    rec.pose_clean.rotation[1],
                  rec.pose_clean.rotation[2],    rec.pose_clean.translation[0],
                  rec.pose_clean.translation[1], rec.pose_clean.translation[2]};
  double pn[6] = {rec.pose_noisy.rotation[0],    rec.pose_noisy.rotation[1],
                  rec.pose_noisy.rotation[2],    rec.pose_noisy.translation[0],
                  rec.pose_noisy.translation[1], rec.pose_noisy.translation[2]};
  fmt_values(os, "pose_clean", pc, 6);
  fmt_values(os, "pose_noisy", pn, 6);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_frame_params: cannot open " + path);
  f << os.str();
}

FrameRecord read_frame_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_frame_params: cannot open " + path);
  FrameRecord rec;
  std::string line;
  while (std::getline(f, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream vs(line.substr(eq + 1));
    std::vector<double> vals;
    double v;
    while (vs >> v) vals.push_back(v);
    auto to_pose = [&](HeadPose& p) {
      if (vals.size() != 6)
        throw std::runtime_error("read_frame_params: pose needs 6 values");
      p.rotation = Vec3(vals[0], vals[1], vals[2]);
      p.translation = Vec3(vals[3], vals[4], vals[5]);
    };
    if (key == "delta")
      rec.delta = Eigen::Map<Eigen::VectorXd>(vals.data(), long(vals.size()));
    else if (key == "delta_noisy")
      rec.delta_noisy = Eigen::Map<Eigen::VectorXd>(vals.data(), long(vals.size()));
    else if (key == "pose_clean")
      to_pose(rec.pose_clean);
    else if (key == "pose_noisy")
      to_pose(rec.pose_noisy);
  }
  return rec;
}

void write_cameras(const std::string& path, const std::vector<Camera>& cams) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_cameras: cannot open " + path);
  f << "# focal cx cy width height R(row major, 9) t(3)\n";
  f.precision(17);
  for (const auto& c : cams) {
    f << c.focal << " " << c.pp.x() << " " << c.pp.y() << " " << c.width << " "
      << c.height;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) f << " " << c.R(r, k);
    for (int k = 0; k < 3; ++k) f << " " << c.t[k];
    f << "\n";
  }
}

std::vector<Camera> read_cameras(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_cameras: cannot open " + path);
  std::vector<Camera> cams;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    Camera c;
    is >> c.focal >> c.pp.x() >> c.pp.y() >> c.width >> c.height;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) is >> c.R(r, k);
    for (int k = 0; k < 3; ++k) is >> c.t[k];
    if (!is) throw std::runtime_error("read_cameras: malformed line");
    cams.push_back(c);
  }
  return cams;
}

SynthConfig parse_synth_config(const std::string& text) {
  SynthConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("synth config line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "frames") cfg.frames = std::stoi(value);
      else if (key == "image_size") cfg.image_size = std::stoi(value);
      else if (key == "cameras") cfg.cameras = std::stoi(value);
      else if (key == "K") cfg.K = std::stoi(value);
      else if (key == "amp_delta") cfg.amp_delta = std::stod(value);
      else if (key == "amp_rot") cfg.amp_rot = std::stod(value);
      else if (key == "amp_trans") cfg.amp_trans = std::stod(value);
      else if (key == "sigma_delta") cfg.sigma_delta = std::stod(value);
      else if (key == "sigma_pose") cfg.sigma_pose = std::stod(value);
      else if (key == "tail_frames") cfg.tail_frames = std::stoi(value);
      else if (key == "tail_delta_norm") cfg.tail_delta_norm = std::stod(value);
      else if (key == "pose_expr_coupled")
        cfg.pose_expr_coupled = (value == "on" || value == "true" || value == "1");
      else if (key == "tail_pose_scale") cfg.tail_pose_scale = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else throw std::runtime_error("synth config: unknown key '" + key + "'");
    } catch (const std::runtime_error&) {
      throw;
    } catch (...) {
      throw std::runtime_error("synth config: bad value for '" + key + "'");
    }
  }
  return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("synth config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_synth_config(ss.str());
}

std::string dump_synth_config(const SynthConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "frames = " << cfg.frames << "\n";
  os << "image_size = " << cfg.image_size << "\n";
  os << "cameras = " << cfg.cameras << "\n";
  os << "K = " << cfg.K << "\n";
  os << "amp_delta = " << cfg.amp_delta << "\n";
  os << "amp_rot = " << cfg.amp_rot << "\n";
  os << "amp_trans = " << cfg.amp_trans << "\n";
  os << "sigma_delta = " << cfg.sigma_delta << "\n";
  os << "sigma_pose = " << cfg.sigma_pose << "\n";
  os << "tail_frames = " << cfg.tail_frames << "\n";
  os << "tail_delta_norm = " << cfg.tail_delta_norm << "\n";
  os << "pose_expr_coupled = " << (cfg.pose_expr_coupled ? "on" : "off") << "\n";
  os << "tail_pose_scale = " << cfg.tail_pose_scale << "\n";
  os << "seed = " << cfg.seed << "\n";
  return os.str();
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "params", ec);
  for (int i = 0; i < int(ds.cameras.size()); ++i)
    fs::create_directories(fs::path(dir) / ("cam" + std::to_string(i)), ec);
  if (ec) throw std::runtime_error("write_dataset: cannot create " + dir);

  save_model((fs::path(dir) / "model.bin").string(), ds.model);
  write_cameras((fs::path(dir) / "cameras.txt").string(), ds.cameras);
  for (size_t t = 0; t < ds.frames.size(); ++t) {
    write_frame_params(
        (fs::path(dir) / "params" / ("frame" + std::to_string(t) + ".txt")).string(),
        ds.frames[t]);
    for (size_t i = 0; i < ds.cameras.size(); ++i) {
      fs::path camdir = fs::path(dir) / ("cam" + std::to_string(i));
      write_png((camdir / ("frame" + std::to_string(t) + ".png")).string(),
                ds.images[t][i]);
      write_png((camdir / ("mask" + std::to_string(t) + ".png")).string(),
                ds.masks[t][i]);
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.model = load_model((fs::path(dir) / "model.bin").string());
  ds.torso = make_torso_mesh();
  ds.cameras = read_cameras((fs::path(dir) / "cameras.txt").string());
  for (int t = 0;; ++t) {
    fs::path params = fs::path(dir) / "params" / ("frame" + std::to_string(t) + ".txt");
    if (!fs::exists(params)) break;
    FrameRecord rec = read_frame_params(params.string());
    rec.index = t;
    ds.frames.push_back(std::move(rec));
    ds.images.emplace_back();
    ds.masks.emplace_back();
    for (size_t i = 0; i < ds.cameras.size(); ++i) {
      fs::path camdir = fs::path(dir) / ("cam" + std::to_string(i));
      ds.images[t].push_back(
          read_png((camdir / ("frame" + std::to_string(t) + ".png")).string()));
      ds.masks[t].push_back(
          read_png((camdir / ("mask" + std::to_string(t) + ".png")).string()));
    }
  }
  if (ds.frames.empty())
    throw std::runtime_error("load_dataset: no frames under " + dir);
  ds.cfg.frames = int(ds.frames.size());
  ds.cfg.cameras = int(ds.cameras.size());
  ds.cfg.K = ds.model.K();
  ds.cfg.image_size = ds.images[0][0].w;
  return ds;
}

} // namespace hav::faceproxy
