#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hav/trainer/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hav;
using namespace hav::trainer;
namespace fs = std::filesystem;

namespace {

faceproxy::Dataset tiny_dataset(uint64_t seed = 11, int frames = 10,
                                double sigma_delta = 0.0) {
  faceproxy::SynthConfig scfg;
  scfg.frames = frames;
  scfg.image_size = 24;
  scfg.cameras = 1;
  scfg.seed = seed;
  scfg.sigma_delta = sigma_delta;
  return faceproxy::synth_dataset(scfg);
}

TrainConfig tiny_config(uint64_t seed = 5) {
  TrainConfig cfg;
  cfg.stage1_iters = 6;
  cfg.stage2_iters = 3;
  cfg.ray_batch = 64;
  cfg.n_coarse = 8;
  cfg.n_fine = 2;
  cfg.plane_res = 12;
  cfg.plane_channels = 6;
  cfg.embed_dim = 6;
  cfg.style_dim = 12;
  cfg.enc1 = 6;
  cfg.enc2 = 8;
  cfg.enc3 = 12;
  cfg.map_hidden = 16;
  cfg.mlp_hidden = 24;
  cfg.color_channels = 4;
  cfg.posenc_bands = 3;
  cfg.exprmlp_hidden = 32;
  cfg.train_frames = 8;
  cfg.translator_base = 6;
  cfg.translator_down = 1;
  cfg.disc_levels = 2;
  cfg.disc_base = 6;
  cfg.log_every = 0;
  cfg.seed = seed;
  return cfg;
}

} // namespace

TEST_CASE("config: dump/parse round-trip and error paths") {
  TrainConfig cfg = tiny_config();
  cfg.condition_mode = ConditionMode::VectorPlane;
  cfg.embedding_condition = EmbeddingCondition::DecoderInput;
  cfg.translator = TranslatorMode::Separate;
  cfg.lambda_mask = 0.25;
  std::string text = dump_config(cfg);
  TrainConfig back = parse_config_text(text);
  CHECK(dump_config(back) == text);
  CHECK(back.condition_mode == ConditionMode::VectorPlane);
  CHECK(back.lambda_mask == 0.25);

  CHECK_THROWS_AS((void)parse_config_text("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("lambda_rgb = banana\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("lambda_rgb = -1\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("condition_mode = what\n"), ConfigError);
}

TEST_CASE("stage 1: fixed seed reproduces the loss curve bitwise") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  TrainResult a = train_stage1(ds, cfg);
  TrainResult b = train_stage1(ds, cfg);
  REQUIRE(a.loss_curve.size() == b.loss_curve.size());
  for (size_t i = 0; i < a.loss_curve.size(); ++i)
    CHECK(a.loss_curve[i] == b.loss_curve[i]);
}

TEST_CASE("stage 1: the loss composition follows the two-term objective") {
  auto ds = tiny_dataset();
  TrainConfig rgb_only = tiny_config();
  rgb_only.stage1_iters = 1;
  rgb_only.lambda_rgb = 1.0;
  rgb_only.lambda_mask = 0.0;
  rgb_only.lambda_emb = 0.0;
  TrainConfig mask_only = rgb_only;
  mask_only.lambda_rgb = 0.0;
  mask_only.lambda_mask = 1.0;
  TrainConfig both = rgb_only;
  both.lambda_mask = 1.0;

  double l_rgb = train_stage1(ds, rgb_only).loss_curve[0];
  double l_mask = train_stage1(ds, mask_only).loss_curve[0];
  double l_both = train_stage1(ds, both).loss_curve[0];
  CHECK(std::abs(l_both - (l_rgb + l_mask)) <= 1e-12);
  CHECK(l_rgb > 0.0);
  CHECK(l_mask > 0.0);
}

TEST_CASE("stage 1: a short run decreases the objective") {
  auto ds = tiny_dataset(21, 8);
  TrainConfig cfg = tiny_config(9);
  cfg.stage1_iters = 220;
  cfg.train_frames = 6;
  TrainResult res = train_stage1(ds, cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += res.loss_curve[i];
    tail += res.loss_curve[res.loss_curve.size() - 1 - i];
  }
  CHECK(tail < head);
}

TEST_CASE("checkpoint: save -> load -> save is byte identical") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 2;
  TrainResult res = train_stage1(ds, cfg);

  fs::path dir = fs::temp_directory_path() / "hav_ckpt_test";
  fs::create_directories(dir);
  std::string p1 = (dir / "a.ckpt").string();
  std::string p2 = (dir / "b.ckpt").string();
  diff::Rng rng(7);
  (void)rng.normal();
  save_checkpoint(p1, res.model, 2, rng.save_state());
  Checkpoint ck = load_checkpoint(p1);
  CHECK(ck.iteration == 2);
  CHECK(ck.model.stage == 1);
  save_checkpoint(p2, ck.model, ck.iteration, ck.rng_state);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(s1.substr(0, 5) == "HAVC1");
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trip preserves evaluation metrics bitwise") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 4;
  TrainResult res = train_stage1(ds, cfg);
  MetricsReport before = evaluate(res.model, ds, 8, 10);

  fs::path p = fs::temp_directory_path() / "hav_rt.ckpt";
  save_checkpoint(p.string(), res.model, 4, "");
  Checkpoint ck = load_checkpoint(p.string());
  MetricsReport after = evaluate(ck.model, ds, 8, 10);
  REQUIRE(before.frames.size() == after.frames.size());
  for (size_t i = 0; i < before.frames.size(); ++i) {
    CHECK(before.frames[i].psnr == after.frames[i].psnr);
    CHECK(before.frames[i].iou == after.frames[i].iou);
  }
  fs::remove(p);
}

TEST_CASE("stage 2 with translator=off matches the stage-1 path exactly") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 5;
  cfg.stage2_iters = 5;
  cfg.translator = TranslatorMode::Off;

  TrainResult s1 = train_stage1(ds, cfg);
  AvatarModel fresh = AvatarModel::make(cfg, ds.model.K(), cfg.train_frames,
                                        ds.images[0][0].w);
  TrainResult s2 = train_stage2(ds, std::move(fresh));
  REQUIRE(s1.loss_curve.size() == s2.loss_curve.size());
  for (size_t i = 0; i < s1.loss_curve.size(); ++i)
    CHECK(std::abs(s1.loss_curve[i] - s2.loss_curve[i]) <= 1e-12);
}

TEST_CASE("stage 2: adversarial gradients reach the plane generators") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 2;
  TrainResult res = train_stage1(ds, cfg);
  AvatarModel& model = res.model;

  FrameContext ctx = make_frame_context(model, ds.model, ds.frames[0].delta,
                                        ds.frames[0].pose_clean);
  diff::Graph g;
  BuiltScene scene = build_scene(g, model, ctx, model.embeddings.mean_embedding());
  volrender::SamplerConfig scfg;
  scfg.n_coarse = 6;
  scfg.n_fine = 2;
  Camera low = ds.cameras[0];
  double s = double(cfg.plane_res) / low.width;
  low.focal *= s;
  low.pp *= s;
  low.width = low.height = cfg.plane_res;
  auto rout = volrender::render_frame(g, scene.state, low, scfg);
  diff::Tensor fake = translate_feature(g, model, rout.feature);
  auto adv = neuraltranslate::adv_losses(g, model.disc,
                                         {diff::detach(fake)}, {fake}, 1.0);
  auto grads = g.backward(adv.generator);
  CHECK(grads.dense(model.gen_front.d2.W.id(), model.gen_front.d2.W.size())
            .abs()
            .sum() > 0.0);
  CHECK(grads.dense(model.translator.stem.W.id(), model.translator.stem.W.size())
            .abs()
            .sum() > 0.0);
}

TEST_CASE("stage 2: initial generator adversarial term is ln 2 for a zero D") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 1;
  TrainResult res = train_stage1(ds, cfg);
  for (auto& c : res.model.disc.convs) {
    c.W.values().setZero();
    c.b.values().setZero();
  }
  res.model.disc.head.W.values().setZero();
  res.model.disc.head.b.values().setZero();

  diff::Graph g;
  diff::Rng rng(3);
  diff::Tensor fake = nn::randn_tensor(rng, {3, 24, 24}, 0.3, false);
  diff::Tensor real = nn::randn_tensor(rng, {3, 24, 24}, 0.3, false);
  auto adv = neuraltranslate::adv_losses(g, res.model.disc, {real}, {fake}, 1.0);
  CHECK(adv.generator.value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ablation flags change only the targeted pathway") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  AvatarModel on = AvatarModel::make(cfg, ds.model.K(), cfg.train_frames, 24);
  TrainConfig cfg_off = cfg;
  cfg_off.texture_channel = false;
  AvatarModel off = AvatarModel::make(cfg_off, ds.model.K(), cfg.train_frames, 24);

  FrameContext a = make_frame_context(on, ds.model, ds.frames[1].delta,
                                      ds.frames[1].pose_clean);
  FrameContext b = make_frame_context(off, ds.model, ds.frames[1].delta,
                                      ds.frames[1].pose_clean);
  REQUIRE(a.front_stack.shape() == b.front_stack.shape());
  int r = cfg.plane_res;
  long plane = long(r) * r;
  // normals (0..3) and mask (6) identical, texture (3..6) zeroed
  CHECK((a.front_stack.values().head(3 * plane) -
         b.front_stack.values().head(3 * plane))
            .abs()
            .maxCoeff() == 0.0);
  CHECK((a.front_stack.values().tail(plane) -
         b.front_stack.values().tail(plane))
            .abs()
            .maxCoeff() == 0.0);
  CHECK(b.front_stack.values().segment(3 * plane, 3 * plane).abs().maxCoeff() ==
        0.0);
  CHECK(a.front_stack.values().segment(3 * plane, 3 * plane).abs().maxCoeff() >
        0.0);
}

TEST_CASE("all condition modes run a training step and a render") {
  auto ds = tiny_dataset();
  for (auto mode : {ConditionMode::Renderings, ConditionMode::VectorPlane,
                    ConditionMode::VectorPlaneExprMod, ConditionMode::ExprMlp}) {
    TrainConfig cfg = tiny_config();
    cfg.stage1_iters = 2;
    cfg.condition_mode = mode;
    TrainResult res = train_stage1(ds, cfg);
    CHECK(res.loss_curve.size() == 2);
    MetricsReport rep = evaluate(res.model, ds, 8, 9);
    CHECK(std::isfinite(rep.mean_psnr));
  }
  for (auto emb : {EmbeddingCondition::Modulate, EmbeddingCondition::DecoderInput}) {
    TrainConfig cfg = tiny_config();
    cfg.stage1_iters = 2;
    cfg.embedding_condition = emb;
    TrainResult res = train_stage1(ds, cfg);
    CHECK(std::isfinite(res.loss_curve.back()));
  }
}

TEST_CASE("stage 2 runs for unet, upsample and separate translator modes") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 2;
  TrainResult s1 = train_stage1(ds, cfg);
  for (auto mode : {TranslatorMode::Unet, TranslatorMode::Upsample,
                    TranslatorMode::Separate}) {
    AvatarModel m = s1.model; // shared tensors; stage-2 updates in place
    fs::path p = fs::temp_directory_path() / "hav_s2.ckpt";
    save_checkpoint(p.string(), s1.model, 2, "");
    Checkpoint ck = load_checkpoint(p.string()); // independent copy
    ck.model.cfg.translator = mode;
    TrainResult s2 = train_stage2(ds, std::move(ck.model));
    CHECK(int(s2.loss_curve.size()) == cfg.stage2_iters);
    CHECK(std::isfinite(s2.loss_curve.back()));
    fs::remove(p);
  }
}

TEST_CASE("reenact: identical rows give identical images, bad dims throw") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 2;
  TrainResult res = train_stage1(ds, cfg);

  DrivingRow row;
  row.delta = Eigen::VectorXd::Constant(8, 0.3);
  row.pose.rotation = Vec3(0.1, 0.0, 0.0);
  auto imgs = reenact(res.model, ds.model, {row, row}, ds.cameras[0]);
  REQUIRE(imgs.size() == 2);
  CHECK(imgs[0].data == imgs[1].data);

  DrivingRow bad;
  bad.delta = Eigen::VectorXd::Zero(5);
  CHECK_THROWS((void)reenact(res.model, ds.model, {bad}, ds.cameras[0]));
}

TEST_CASE("driving file parser accepts delta+pose rows and flags mismatches") {
  fs::path p = fs::temp_directory_path() / "hav_driving.txt";
  {
    std::ofstream f(p);
    f << "# delta (3) then pose (6)\n";
    f << "0.1 0.2 0.3  0.0 0.1 0.0  0.01 0 0\n";
    f << "0.4 -0.2 0.0  0.2 0.0 0.0  0 0 0\n";
  }
  auto rows = read_driving_file(p.string(), 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].delta[0] == doctest::Approx(0.4));
  CHECK(rows[0].pose.rotation[1] == doctest::Approx(0.1));
  CHECK_THROWS((void)read_driving_file(p.string(), 8));
  fs::remove(p);
}

TEST_CASE("metrics report: psnr cap, strict monotonicity, file outputs") {
  Image a(6, 6, 3, 0.5);
  CHECK(psnr(a, a) == 99.0);
  double prev = 1e9;
  for (double off : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image b(6, 6, 3, 0.5 + off);
    double v = psnr(a, b);
    CHECK(v < prev);
    prev = v;
  }

  MetricsReport rep;
  rep.frames.push_back({0, 30.0, 0.9, 0.01});
  rep.mean_psnr = 30.0;
  rep.mean_iou = 0.9;
  rep.mean_percep = 0.01;
  fs::path dir = fs::temp_directory_path() / "hav_metrics";
  fs::create_directories(dir);
  write_metrics(rep, (dir / "metrics.txt").string(), (dir / "metrics.tsv").string());
  std::ifstream tsv(dir / "metrics.tsv");
  std::string header;
  std::getline(tsv, header);
  CHECK(header == "frame\tpsnr\tiou\tperceptual_lite");
  fs::remove_all(dir);
}

TEST_CASE("evaluate: stability statistics populate for 3+ frames") {
  auto ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.stage1_iters = 2;
  TrainResult res = train_stage1(ds, cfg);
  MetricsReport rep = evaluate(res.model, ds, 6, 10);
  REQUIRE(rep.frames.size() == 4);
  CHECK(rep.stability_iou_mean >= 0.0);
  CHECK(rep.stability_iou_mean <= 1.0);
  CHECK(rep.stability_iou_var >= 0.0);
}
