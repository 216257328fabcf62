#include "CLI11.hpp"

#include "hav/diffcore/gradcheck.hpp"
#include "hav/trainer/trainer.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace hav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int cmd_synth(const std::string& config_path, uint64_t seed, bool seed_set,
              const std::string& out) {
  faceproxy::SynthConfig cfg;
  if (!config_path.empty()) cfg = faceproxy::load_synth_config(config_path);
  if (seed_set) cfg.seed = seed;
  faceproxy::Dataset ds = faceproxy::synth_dataset(cfg);
  faceproxy::write_dataset(ds, out);
  std::cout << "wrote " << ds.frames.size() << " frames x "
            << ds.cameras.size() << " cameras to " << out << std::endl;
  return kExitOk;
}

int cmd_train(int stage, const std::string& dataset_dir,
              const std::string& config_path, const std::string& init_ckpt,
              uint64_t seed, bool seed_set, const std::string& out) {
  trainer::TrainConfig cfg;
  if (!config_path.empty()) cfg = trainer::load_config(config_path);
  if (seed_set) cfg.seed = seed;
  fs::create_directories(out);

  faceproxy::Dataset ds = faceproxy::load_dataset(dataset_dir);
  if (cfg.train_frames > int(ds.frames.size())) {
    std::cerr << "train: config asks for " << cfg.train_frames
              << " training frames but the dataset has " << ds.frames.size()
              << std::endl;
    return kExitUsage;
  }

  trainer::TrainResult res;
  if (stage == 1) {
    res = trainer::train_stage1(ds, cfg, out);
  } else {
    if (init_ckpt.empty()) {
      std::cerr << "train --stage 2 requires --init with a stage-1 checkpoint"
                << std::endl;
      return kExitUsage;
    }
    trainer::Checkpoint ck = trainer::load_checkpoint(init_ckpt);
    if (!config_path.empty()) {
      // stage-2 switches come from the new config; the model dimensions
      // stay with the checkpoint
      ck.model.cfg.stage2_iters = cfg.stage2_iters;
      ck.model.cfg.translator = cfg.translator;
      ck.model.cfg.lambda_recon = cfg.lambda_recon;
      ck.model.cfg.lambda_percep = cfg.lambda_percep;
      ck.model.cfg.lambda_adv = cfg.lambda_adv;
      ck.model.cfg.lambda_r1 = cfg.lambda_r1;
      ck.model.cfg.lr_translator = cfg.lr_translator;
      ck.model.cfg.log_every = cfg.log_every;
    }
    res = trainer::train_stage2(ds, std::move(ck.model), out);
  }

  std::string ckpt =
      (fs::path(out) / ("stage" + std::to_string(stage) + ".ckpt")).string();
  diff::Rng rng(cfg.seed);
  trainer::save_checkpoint(ckpt, res.model, res.iterations, rng.save_state());
  std::ofstream losses(fs::path(out) / "loss_curve.txt");
  losses.precision(17);
  for (size_t i = 0; i < res.loss_curve.size(); ++i)
    losses << i << " " << res.loss_curve[i] << "\n";
  std::cout << "wrote " << ckpt << std::endl;
  return kExitOk;
}

int cmd_render(const std::string& ckpt_path, const std::string& dataset_dir,
               int frame, int cam, bool translate, const std::string& out,
               const std::string& dump_feature, const std::string& dump_cond,
               const std::string& dump_weights) {
  trainer::Checkpoint ck = trainer::load_checkpoint(ckpt_path);
  faceproxy::Dataset ds = faceproxy::load_dataset(dataset_dir);
  if (frame < 0 || frame >= int(ds.frames.size()) || cam < 0 ||
      cam >= int(ds.cameras.size())) {
    std::cerr << "render: frame/camera out of range" << std::endl;
    return kExitUsage;
  }
  fs::create_directories(out);
  const auto& fr = ds.frames[frame];
  trainer::FrameRender r =
      trainer::render_single(ck.model, ds.model, fr.delta_noisy, fr.pose_noisy,
                             ds.cameras[cam], translate);
  write_png((fs::path(out) / "rgb.png").string(), r.rgb);
  write_png((fs::path(out) / "mask.png").string(), r.mask);
  if (!dump_feature.empty()) volrender::write_feature_map(dump_feature, r.feature);
  if (!dump_cond.empty()) {
    auto set = orthorender::render_condition_set(
        ds.model, fr.delta_noisy, fr.pose_noisy,
        ck.model.cfg.rendering_pose == trainer::RenderingPose::Posed
            ? orthorender::RenderMode::Posed
            : orthorender::RenderMode::ZeroPosed,
        ck.model.cfg.plane_res, ck.model.cfg.texture_channel);
    orthorender::dump_rendering_set(set, dump_cond);
  }
  if (!dump_weights.empty()) {
    diff::Graph g(diff::Graph::NoGrad);
    motionwarp::write_weight_volume(dump_weights, ck.model.wgen.forward(g));
  }
  std::cout << "rendered frame " << frame << " to " << out << std::endl;
  return kExitOk;
}

int cmd_reenact(const std::string& ckpt_path, const std::string& dataset_dir,
                const std::string& driving, int cam, bool translate,
                const std::string& out) {
  trainer::Checkpoint ck = trainer::load_checkpoint(ckpt_path);
  faceproxy::Dataset ds = faceproxy::load_dataset(dataset_dir);
  auto rows = trainer::read_driving_file(driving, ck.model.K);
  fs::create_directories(out);
  auto images =
      trainer::reenact(ck.model, ds.model, rows, ds.cameras[cam], translate);
  for (size_t i = 0; i < images.size(); ++i)
    write_png((fs::path(out) / ("frame" + std::to_string(i) + ".png")).string(),
              images[i]);
  std::cout << "reenacted " << images.size() << " frames to " << out
            << std::endl;
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& split, bool translate, const std::string& out) {
  trainer::Checkpoint ck = trainer::load_checkpoint(ckpt_path);
  faceproxy::Dataset ds = faceproxy::load_dataset(dataset_dir);
  int first = 0, last = int(ds.frames.size());
  int train_frames = std::min(ck.model.cfg.train_frames, last);
  if (split == "train")
    last = train_frames;
  else if (split == "test")
    first = train_frames;
  else if (split != "all") {
    std::cerr << "eval: split must be train, test or all" << std::endl;
    return kExitUsage;
  }
  if (first >= last) {
    std::cerr << "eval: split '" << split << "' is empty" << std::endl;
    return kExitUsage;
  }
  fs::create_directories(out);
  trainer::MetricsReport rep =
      trainer::evaluate(ck.model, ds, first, last, 0, translate);
  trainer::write_metrics(rep, (fs::path(out) / "metrics.txt").string(),
                         (fs::path(out) / "metrics.tsv").string());
  std::cout << "mean PSNR " << rep.mean_psnr << " dB, mask IoU " << rep.mean_iou
            << " over " << rep.frames.size() << " frames -> " << out
            << std::endl;
  return kExitOk;
}

int cmd_extract_mesh(const std::string& ckpt_path,
                     const std::string& dataset_dir, int frame, int res,
                     double iso, const std::string& out) {
  trainer::Checkpoint ck = trainer::load_checkpoint(ckpt_path);
  faceproxy::Dataset ds = faceproxy::load_dataset(dataset_dir);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(ck.model.K);
  HeadPose pose;
  if (frame >= 0 && frame < int(ds.frames.size())) {
    delta = ds.frames[frame].delta_noisy;
    pose = ds.frames[frame].pose_noisy;
  }
  trainer::FrameContext ctx =
      trainer::make_frame_context(ck.model, ds.model, delta, pose);
  diff::Graph g(diff::Graph::NoGrad);
  trainer::BuiltScene scene = trainer::build_scene(
      g, ck.model, ctx, ck.model.embeddings.mean_embedding());

  auto density = [&](const Vec3& p) {
    return radiancefield::query_point(ck.model.decoder, ck.model.field_cfg,
                                      scene.state.planes, p)
        .sigma;
  };
  Mesh mesh = radiancefield::extract_mesh(density, res, iso);
  radiancefield::write_obj(out, mesh);
  std::cout << "extracted " << mesh.V.rows() << " vertices, " << mesh.F.rows()
            << " triangles at iso " << iso << " -> " << out << std::endl;
  return kExitOk;
}

int cmd_gradcheck(bool quiet) {
  diff::GradCheckReport report = diff::gradcheck_default_suite(!quiet);
  int failed = 0;
  for (const auto& r : report.results) failed += !r.pass;
  std::cout << report.results.size() - failed << "/" << report.results.size()
            << " gradient checks passed" << std::endl;
  return failed == 0 ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditioned volumetric head avatar pipeline"};
  app.require_subcommand(1);

  std::string config_path, out = "out", dataset_dir, ckpt_path, init_ckpt;
  std::string driving, dump_feature, dump_cond, dump_weights, split = "test";
  uint64_t seed = 0;
  bool translate = false, quiet = false;
  int stage = 1, frame = 0, cam = 0, mc_res = 64;
  double iso = 10.0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "synth config file");
  auto* synth_seed = synth->add_option("--seed", seed, "override the seed");
  synth->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "optimize an avatar");
  train->add_option("--stage", stage, "1 or 2")->check(CLI::Range(1, 2));
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--config", config_path, "training config file");
  train->add_option("--init", init_ckpt, "stage-1 checkpoint (stage 2)");
  auto* train_seed = train->add_option("--seed", seed, "override the seed");
  train->add_option("--out", out, "output directory")->required();

  auto* render = app.add_subcommand("render", "render one dataset frame");
  render->add_option("--checkpoint", ckpt_path)->required();
  render->add_option("--dataset", dataset_dir)->required();
  render->add_option("--frame", frame);
  render->add_option("--cam", cam);
  render->add_flag("--translate", translate, "apply the translation network");
  render->add_option("--out", out)->required();
  render->add_option("--dump-feature", dump_feature, "raw feature map file");
  render->add_option("--dump-cond", dump_cond, "condition rendering directory");
  render->add_option("--dump-weights", dump_weights, "weight volume file");

  auto* reenact =
      app.add_subcommand("reenact", "drive the avatar from a params file");
  reenact->add_option("--checkpoint", ckpt_path)->required();
  reenact->add_option("--dataset", dataset_dir)->required();
  reenact->add_option("--driving", driving, "rows: delta then pose")->required();
  reenact->add_option("--cam", cam);
  reenact->add_flag("--translate", translate);
  reenact->add_option("--out", out)->required();

  auto* evalc = app.add_subcommand("eval", "metrics against ground truth");
  evalc->add_option("--checkpoint", ckpt_path)->required();
  evalc->add_option("--dataset", dataset_dir)->required();
  evalc->add_option("--split", split, "train | test | all");
  evalc->add_flag("--translate", translate);
  evalc->add_option("--out", out)->required();

  auto* mesh =
      app.add_subcommand("extract-mesh", "marching isosurface of the density");
  mesh->add_option("--checkpoint", ckpt_path)->required();
  mesh->add_option("--dataset", dataset_dir)->required();
  mesh->add_option("--frame", frame, "conditioning frame, -1 for neutral");
  mesh->add_option("--res", mc_res);
  mesh->add_option("--iso", iso);
  mesh->add_option("--out", out, "obj path")->required();

  auto* gc = app.add_subcommand("gradcheck", "run the gradient-check suite");
  gc->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(config_path, seed, !synth_seed->empty(), out);
    if (train->parsed())
      return cmd_train(stage, dataset_dir, config_path, init_ckpt, seed,
                       !train_seed->empty(), out);
    if (render->parsed())
      return cmd_render(ckpt_path, dataset_dir, frame, cam, translate, out,
                        dump_feature, dump_cond, dump_weights);
    if (reenact->parsed())
      return cmd_reenact(ckpt_path, dataset_dir, driving, cam, translate, out);
    if (evalc->parsed())
      return cmd_eval(ckpt_path, dataset_dir, split, translate, out);
    if (mesh->parsed())
      return cmd_extract_mesh(ckpt_path, dataset_dir, frame, mc_res, iso, out);
    if (gc->parsed()) return cmd_gradcheck(quiet);
  } catch (const trainer::ConfigError& e) {
    std::cerr << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
