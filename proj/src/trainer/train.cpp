#include "hav/trainer/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace hav::trainer {

using namespace diff;
using volrender::Ray;
using volrender::SamplerConfig;

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

SamplerConfig sampler_for(const TrainConfig& cfg, uint64_t iter) {
  SamplerConfig s;
  s.n_coarse = cfg.n_coarse;
  s.n_fine = cfg.n_fine;
  s.jitter = cfg.jitter;
  s.seed = mix64(cfg.seed) + iter;
  return s;
}

std::vector<FrameContext> build_contexts(const AvatarModel& model,
                                         const faceproxy::Dataset& ds) {
  std::vector<FrameContext> out;
  out.reserve(ds.frames.size());
  for (const auto& fr : ds.frames)
    out.push_back(
        make_frame_context(model, ds.model, fr.delta_noisy, fr.pose_noisy));
  return out;
}

Tensor image_tensor(const Image& img) {
  return Tensor::from({img.c, img.h, img.w},
                      Eigen::Map<const Array>(img.data.data(),
                                              long(img.data.size())));
}

Image tensor_image(const Tensor& t) {
  Image img(t.shape()[2], t.shape()[1], t.shape()[0]);
  Eigen::Map<Array>(img.data.data(), long(img.data.size())) = t.values();
  return img;
}

Camera scaled_camera(const Camera& cam, int res) {
  Camera c = cam;
  double s = double(res) / cam.width;
  c.focal *= s;
  c.pp *= s;
  c.width = c.height = res;
  return c;
}

Image downsample_mask(const Image& m, int res) {
  int f = m.w / res;
  Image out(res, res, 1);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double acc = 0;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) acc += m.at(0, y * f + dy, x * f + dx);
      out.at(0, y, x) = acc / (f * f) >= 0.5 ? 1.0 : 0.0;
    }
  return out;
}

struct Stage1Step {
  double loss = 0, rgb = 0, mask = 0, emb = 0;
};

// training-time scene: gamma comes from the frame's embedding row
BuiltScene build_scene_train(AvatarModel& model, Graph& g,
                             const FrameContext& ctx, int frame) {
  Tensor gamma = model.embeddings.lookup(g, frame);
  return build_scene(g, model, ctx, gamma);
}

Stage1Step stage1_step(AvatarModel& model, const faceproxy::Dataset& ds,
                       const std::vector<FrameContext>& ctxs, Adam& opt,
                       Rng& rng, uint64_t iter, std::string* nan_report) {
  const TrainConfig& cfg = model.cfg;
  int frame = rng.uniform_int(cfg.train_frames);
  int cam = rng.uniform_int(int(ds.cameras.size()));
  const Camera& camera = ds.cameras[cam];
  SamplerConfig scfg = sampler_for(cfg, iter);

  std::vector<Ray> rays;
  Array gt_rgb(long(cfg.ray_batch) * 3);
  Array gt_mask(cfg.ray_batch);
  for (int i = 0; i < cfg.ray_batch; ++i) {
    int y = rng.uniform_int(camera.height);
    int x = rng.uniform_int(camera.width);
    rays.push_back(volrender::make_ray(camera, y, x, scfg));
    for (int k = 0; k < 3; ++k) gt_rgb[3 * i + k] = ds.images[frame][cam].at(k, y, x);
    gt_mask[i] = ds.masks[frame][cam].at(0, y, x);
  }

  Graph g;
  BuiltScene scene = build_scene_train(model, g, ctxs[frame], frame);
  volrender::RenderBatch batch = volrender::render_rays(g, scene.state, rays, scfg);

  Tensor l_rgb = mean(g, square(g, sub(g, batch.rgb,
                                       Tensor::from({cfg.ray_batch, 3}, gt_rgb))));
  Tensor l_mask = bce_mean(g, batch.mask, Tensor::from({cfg.ray_batch}, gt_mask));
  Tensor l_emb = model.embeddings.penalty(g);
  Tensor loss = add(g, add(g, mul_scalar(g, l_rgb, cfg.lambda_rgb),
                           mul_scalar(g, l_mask, cfg.lambda_mask)),
                    mul_scalar(g, l_emb, cfg.lambda_emb));

  Stage1Step st;
  st.loss = loss.value();
  st.rgb = l_rgb.value();
  st.mask = l_mask.value();
  st.emb = l_emb.value();
  if (!std::isfinite(st.loss)) {
    if (nan_report) {
      std::ostringstream os;
      os << "non-finite loss at iteration " << iter << "\n"
         << "frame " << frame << " camera " << cam << "\n"
         << "rgb " << st.rgb << " mask " << st.mask << " emb " << st.emb << "\n"
         << "ray pixels:";
      for (const Ray& r : rays) os << " " << r.id;
      os << "\n";
      *nan_report = os.str();
    }
    throw TrainingError("stage1: non-finite loss at iteration " +
                        std::to_string(iter));
  }

  GradientMap grads = g.backward(loss);
  opt.step(model.main_params(), grads);
  return st;
}

} // namespace

TrainResult train_stage1(const faceproxy::Dataset& ds, const TrainConfig& cfg,
                         const std::string& out_dir) {
  cfg.validate();
  if (cfg.train_frames > int(ds.frames.size()))
    throw TrainingError("train_stage1: train_frames exceeds the dataset");
  TrainResult res;
  res.model = AvatarModel::make(cfg, ds.model.K(), cfg.train_frames,
                                ds.images[0][0].w);
  std::vector<FrameContext> ctxs = build_contexts(res.model, ds);
  Adam opt(cfg.lr_main);
  Rng rng(mix64(cfg.seed ^ 0x51a9e1ull));

  for (int iter = 0; iter < cfg.stage1_iters; ++iter) {
    std::string nan_report;
    try {
      Stage1Step st = stage1_step(res.model, ds, ctxs, opt, rng, iter,
                                  &nan_report);
      res.loss_curve.push_back(st.loss);
      if (cfg.log_every > 0 && iter % cfg.log_every == 0)
        std::cout << "stage1 iter " << iter << " loss " << st.loss << " rgb "
                  << st.rgb << " mask " << st.mask << std::endl;
    } catch (const TrainingError&) {
      if (!out_dir.empty() && !nan_report.empty()) {
        std::ofstream dump(std::filesystem::path(out_dir) / "nan_dump.txt");
        dump << nan_report;
      }
      throw;
    }
  }
  res.model.stage = 1;
  res.iterations = cfg.stage1_iters;
  return res;
}

TrainResult train_stage2(const faceproxy::Dataset& ds, AvatarModel model,
                         const std::string& out_dir) {
  const TrainConfig cfg = model.cfg;
  TrainResult res;
  res.model = std::move(model);

  std::vector<FrameContext> ctxs = build_contexts(res.model, ds);

  if (cfg.translator == TranslatorMode::Off) {
    // flag contract: identical to the stage-1 optimization path, including
    // its sampling stream
    Rng rng(mix64(cfg.seed ^ 0x51a9e1ull));
    Adam opt(cfg.lr_main);
    for (int iter = 0; iter < cfg.stage2_iters; ++iter) {
      std::string nan_report;
      Stage1Step st = stage1_step(res.model, ds, ctxs, opt, rng, iter,
                                  &nan_report);
      res.loss_curve.push_back(st.loss);
    }
    res.model.stage = 2;
    res.iterations = cfg.stage2_iters;
    return res;
  }

  int out_res = cfg.plane_res * cfg.translator_up;
  if (out_res != ds.images[0][0].w)
    throw TrainingError(
        "stage2: translator output " + std::to_string(out_res) +
        " does not match the dataset resolution " +
        std::to_string(ds.images[0][0].w) +
        " (plane_res * translator_up must equal the image size)");

  Rng rng(mix64(cfg.seed ^ 0x57a6e2ull));
  Adam opt_main(cfg.lr_main);
  Adam opt_trans(cfg.lr_translator);
  Adam opt_disc(cfg.lr_main);
  bool joint = cfg.translator != TranslatorMode::Separate;
  int low_res = cfg.plane_res;

  for (int iter = 0; iter < cfg.stage2_iters; ++iter) {
    int frame = rng.uniform_int(cfg.train_frames);
    int cam = rng.uniform_int(int(ds.cameras.size()));
    SamplerConfig scfg = sampler_for(cfg, 0x400000ull + iter);

    Graph g;
    BuiltScene scene = build_scene_train(res.model, g, ctxs[frame], frame);
    Camera low_cam = scaled_camera(ds.cameras[cam], low_res);
    volrender::RenderOutput rout =
        volrender::render_frame(g, scene.state, low_cam, scfg);
    Tensor fake = translate_feature(g, res.model, rout.feature);
    Tensor real = image_tensor(ds.images[frame][cam]);

    Tensor l_recon = mean(g, abs_op(g, sub(g, fake, real)));
    Tensor l_percep = res.model.percep.distance(g, fake, real);
    auto adv = neuraltranslate::adv_losses(g, res.model.disc, {real}, {fake},
                                           cfg.lambda_r1);
    Tensor g_total = add(
        g, add(g, mul_scalar(g, l_recon, cfg.lambda_recon),
               mul_scalar(g, l_percep, cfg.lambda_percep)),
        mul_scalar(g, adv.generator, cfg.lambda_adv));

    double loss_val = g_total.value();
    double d_val = adv.discriminator.value();
    if (!std::isfinite(loss_val) || !std::isfinite(d_val)) {
      if (!out_dir.empty()) {
        std::ofstream dump(std::filesystem::path(out_dir) / "nan_dump.txt");
        dump << "stage2 non-finite loss at iteration " << iter << " frame "
             << frame << " G " << loss_val << " D " << d_val << "\n";
      }
      throw TrainingError("stage2: non-finite loss at iteration " +
                          std::to_string(iter));
    }

    // discriminator first (fake detached inside adv_losses), then the
    // generator groups from the same recorded forward
    GradientMap d_grads = g.backward(adv.discriminator);
    opt_disc.step(res.model.disc_params(), d_grads);
    GradientMap g_grads = g.backward(g_total);
    if (joint) opt_main.step(res.model.main_params(), g_grads);
    opt_trans.step(res.model.translator_params(), g_grads);

    res.loss_curve.push_back(loss_val);
    if (cfg.log_every > 0 && iter % cfg.log_every == 0)
      std::cout << "stage2 iter " << iter << " G " << loss_val << " D "
                << d_val << std::endl;
  }
  res.model.stage = 2;
  res.iterations = cfg.stage2_iters;
  return res;
}

MetricsReport evaluate(const AvatarModel& model, const faceproxy::Dataset& ds,
                       int first, int last, int camera, bool translate) {
  MetricsReport rep;
  Tensor gamma = model.embeddings.mean_embedding();
  std::vector<Image> rendered_masks;
  for (int t = first; t < last; ++t) {
    FrameContext ctx = make_frame_context(model, ds.model,
                                          ds.frames[t].delta_noisy,
                                          ds.frames[t].pose_noisy);
    Graph g(Graph::NoGrad);
    BuiltScene scene = build_scene(g, model, ctx, gamma);
    SamplerConfig scfg = sampler_for(model.cfg, 0x800000ull + t);
    scfg.jitter = false;

    FrameMetrics fm;
    fm.frame = t;
    Image rgb, mask;
    const Image& gt = ds.images[t][camera];
    if (translate) {
      Camera low_cam = scaled_camera(ds.cameras[camera], model.cfg.plane_res);
      auto rout = volrender::render_frame(g, scene.state, low_cam, scfg);
      rgb = tensor_image(translate_feature(g, model, rout.feature));
      mask = rout.mask;
      fm.iou = mask_iou(mask, downsample_mask(ds.masks[t][camera], mask.w));
    } else {
      auto rout = volrender::render_frame(g, scene.state, ds.cameras[camera], scfg);
      rgb = rout.rgb;
      mask = rout.mask;
      fm.iou = mask_iou(mask, ds.masks[t][camera]);
    }
    fm.psnr = psnr(rgb, gt);
    {
      Graph pg(Graph::NoGrad);
      fm.percep =
          model.percep.distance(pg, image_tensor(rgb), image_tensor(gt)).value();
    }
    rendered_masks.push_back(mask);
    rep.frames.push_back(fm);
  }

  for (const auto& fm : rep.frames) {
    rep.mean_psnr += fm.psnr;
    rep.mean_iou += fm.iou;
    rep.mean_percep += fm.percep;
  }
  int n = std::max<int>(1, int(rep.frames.size()));
  rep.mean_psnr /= n;
  rep.mean_iou /= n;
  rep.mean_percep /= n;

  if (rendered_masks.size() >= 2) {
    std::vector<double> seq;
    for (size_t i = 0; i + 1 < rendered_masks.size(); ++i)
      seq.push_back(mask_iou(rendered_masks[i], rendered_masks[i + 1]));
    for (double v : seq) rep.stability_iou_mean += v;
    rep.stability_iou_mean /= double(seq.size());
    for (double v : seq) {
      double d = v - rep.stability_iou_mean;
      rep.stability_iou_var += d * d;
    }
    rep.stability_iou_var /= double(seq.size());
  }
  return rep;
}

void write_metrics(const MetricsReport& rep, const std::string& txt_path,
                   const std::string& tsv_path) {
  {
    std::ofstream f(txt_path);
    if (!f) throw std::runtime_error("write_metrics: cannot open " + txt_path);
    f << "frames evaluated: " << rep.frames.size() << "\n";
    f << "mean PSNR: " << rep.mean_psnr << " dB\n";
    f << "mean mask IoU: " << rep.mean_iou << "\n";
    f << "mean perceptual_lite: " << rep.mean_percep
      << "  (random-feature stand-in, not comparable to published scores)\n";
    f << "frame-to-frame mask IoU: mean " << rep.stability_iou_mean << " var "
      << rep.stability_iou_var << "\n";
  }
  {
    std::ofstream f(tsv_path);
    if (!f) throw std::runtime_error("write_metrics: cannot open " + tsv_path);
    f << "frame\tpsnr\tiou\tperceptual_lite\n";
    for (const auto& fm : rep.frames)
      f << fm.frame << "\t" << fm.psnr << "\t" << fm.iou << "\t" << fm.percep
        << "\n";
    f << "mean\t" << rep.mean_psnr << "\t" << rep.mean_iou << "\t"
      << rep.mean_percep << "\n";
  }
}

std::vector<DrivingRow> read_driving_file(const std::string& path, int K) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_driving_file: cannot open " + path);
  std::vector<DrivingRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream is(line);
    std::vector<double> vals;
    double v;
    while (is >> v) vals.push_back(v);
    if (vals.empty()) continue;
    if (int(vals.size()) != K + 6)
      throw std::runtime_error("driving file line " + std::to_string(lineno) +
                               ": expected " + std::to_string(K + 6) +
                               " values (delta then pose), got " +
                               std::to_string(vals.size()));
    DrivingRow row;
    row.delta = Eigen::Map<Eigen::VectorXd>(vals.data(), K);
    row.pose.rotation = Vec3(vals[K], vals[K + 1], vals[K + 2]);
    row.pose.translation = Vec3(vals[K + 3], vals[K + 4], vals[K + 5]);
    rows.push_back(std::move(row));
  }
  return rows;
}

FrameRender render_single(const AvatarModel& model,
                          const faceproxy::BlendshapeModel& head,
                          const Eigen::VectorXd& delta, const HeadPose& pose,
                          const Camera& camera, bool translate) {
  FrameContext ctx = make_frame_context(model, head, delta, pose);
  Graph g(Graph::NoGrad);
  BuiltScene scene = build_scene(g, model, ctx, model.embeddings.mean_embedding());
  SamplerConfig scfg = sampler_for(model.cfg, 0xC00000ull);
  scfg.jitter = false;

  FrameRender out;
  if (translate) {
    Camera low_cam = scaled_camera(camera, model.cfg.plane_res);
    auto rout = volrender::render_frame(g, scene.state, low_cam, scfg);
    out.rgb = tensor_image(translate_feature(g, model, rout.feature));
    out.mask = rout.mask;
    out.feature = rout.feature;
  } else {
    auto rout = volrender::render_frame(g, scene.state, camera, scfg);
    out.rgb = rout.rgb;
    out.mask = rout.mask;
    out.feature = rout.feature;
  }
  return out;
}

std::vector<Image> reenact(const AvatarModel& model,
                           const faceproxy::BlendshapeModel& head,
                           const std::vector<DrivingRow>& rows,
                           const Camera& camera, bool translate) {
  std::vector<Image> out;
  for (const auto& row : rows) {
    if (row.delta.size() != model.K)
      throw std::runtime_error("reenact: driving delta dimension " +
                               std::to_string(row.delta.size()) +
                               " does not match the model (" +
                               std::to_string(model.K) + ")");
    out.push_back(
        render_single(model, head, row.delta, row.pose, camera, translate).rgb);
  }
  return out;
}

} // namespace hav::trainer
