// Command-line front end wiring the pipeline together: corpus synthesis,
// training, translation, interpolation, evaluation, and compositing.
//
// Every command writes a RunManifest JSON next to its outputs (resolved
// config, input/output paths, seed, tool version, wall-clock time), and
// removes any partially written outputs when it fails, so exit code 0
// means every declared output is present and valid.

#include "dubstyle/compositor.hpp"
#include "dubstyle/kernels.hpp"
#include "dubstyle/params.hpp"
#include "dubstyle/synth.hpp"
#include "dubstyle/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dubstyle;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct RunContext {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::vector<std::string> written;  // removed on failure
  std::string manifest_path;
};

void write_manifest(const RunContext& ctx, double wall_seconds) {
  json m;
  m["command"] = ctx.command;
  m["tool_version"] = kToolVersion;
  if (ctx.has_seed) m["seed"] = ctx.seed;
  m["config"] = ctx.config;
  m["inputs"] = ctx.inputs;
  m["outputs"] = ctx.outputs;
  m["timings"] = {{"wall_seconds", wall_seconds}};
  std::ofstream out(ctx.manifest_path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write manifest '" + ctx.manifest_path + "'");
  out << m.dump(2) << "\n";
}

int run_command(RunContext& ctx, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(ctx, secs);
    return 0;
  } catch (const std::exception& e) {
    for (const std::string& p : ctx.written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    {
      std::error_code ec;
      if (!ctx.manifest_path.empty()) fs::remove(ctx.manifest_path, ec);
    }
    std::cerr << "dubstyle " << ctx.command << ": error: " << e.what() << "\n";
    return 1;
  }
}

// Sequence files go by extension: .csv or .dseq.
void write_sequence_auto(const params::ExpressionSequence& seq,
                         const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    params::write_sequence_csv(path, seq);
  } else if (path.size() >= 5 && path.substr(path.size() - 5) == ".dseq") {
    params::write_sequence_dseq(path, seq);
  } else {
    throw std::invalid_argument("output sequence path '" + path +
                                "' must end in .csv or .dseq");
  }
}

std::string default_manifest_path(const std::string& out_path) {
  return out_path + ".manifest.json";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expression style translation toolkit"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth_cmd =
      app.add_subcommand("synth", "generate paired synthetic corpora");
  std::string sy_spec_src, sy_spec_tgt, sy_out;
  std::size_t sy_frames = 2000;
  std::uint64_t sy_seed = 1;
  synth_cmd->add_option("--spec-src", sy_spec_src,
                        "source style spec JSON (default: built-in)");
  synth_cmd->add_option("--spec-tgt", sy_spec_tgt,
                        "target style spec JSON (default: built-in)");
  synth_cmd->add_option("--frames", sy_frames, "frames per corpus")
      ->capture_default_str();
  synth_cmd->add_option("--seed", sy_seed, "content seed")
      ->capture_default_str();
  synth_cmd->add_option("--out", sy_out, "output directory")->required();

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a style translator");
  std::string tr_config, tr_source, tr_target, tr_out, tr_history;
  std::uint64_t tr_seed = 0;
  std::size_t tr_frames = 0;
  bool tr_seed_set = false, tr_frames_set = false;
  train_cmd->add_option("--config", tr_config, "TrainConfig JSON file");
  train_cmd->add_option("--source", tr_source, "source corpus (.csv/.dseq)")
      ->required();
  train_cmd->add_option("--target", tr_target, "target corpus (.csv/.dseq)")
      ->required();
  train_cmd->add_option("--out", tr_out, "output checkpoint path")->required();
  train_cmd->add_option("--history", tr_history,
                        "history CSV path (default: <out>.history.csv)");
  train_cmd
      ->add_option_function<std::uint64_t>(
          "--seed",
          [&](const std::uint64_t& v) {
            tr_seed = v;
            tr_seed_set = true;
          },
          "seed override")
      ->expected(1);
  train_cmd
      ->add_option_function<std::size_t>(
          "--frames",
          [&](const std::size_t& v) {
            tr_frames = v;
            tr_frames_set = true;
          },
          "train_frames override")
      ->expected(1);

  // ---- translate ----
  auto* translate_cmd =
      app.add_subcommand("translate", "translate a sequence with a checkpoint");
  std::string tl_ckpt, tl_input, tl_out, tl_direction = "st";
  translate_cmd->add_option("--checkpoint", tl_ckpt, "DSTW checkpoint")
      ->required();
  translate_cmd->add_option("--input", tl_input, "input sequence (.csv/.dseq)")
      ->required();
  translate_cmd
      ->add_option("--direction", tl_direction, "translation direction")
      ->check(CLI::IsMember({"st", "ts"}))
      ->capture_default_str();
  translate_cmd->add_option("--out", tl_out, "output sequence (.csv/.dseq)")
      ->required();

  // ---- interpolate ----
  auto* interp_cmd = app.add_subcommand(
      "interpolate", "blend source and translated sequences");
  std::string in_source, in_translated, in_out;
  double in_alpha = 0.5;
  interp_cmd->add_option("--source", in_source, "source sequence")->required();
  interp_cmd->add_option("--translated", in_translated, "translated sequence")
      ->required();
  interp_cmd->add_option("--alpha", in_alpha, "blend weight in [0,1]")
      ->required();
  interp_cmd->add_option("--out", in_out, "output sequence (.csv/.dseq)")
      ->required();

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "compute style metrics");
  std::string ev_source, ev_translated, ev_oracle, ev_target, ev_out;
  eval_cmd->add_option("--source", ev_source, "source test sequence")
      ->required();
  eval_cmd->add_option("--translated", ev_translated, "translated sequence")
      ->required();
  eval_cmd->add_option("--oracle", ev_oracle, "oracle sequence")->required();
  eval_cmd->add_option("--target", ev_target, "target corpus (for stats)")
      ->required();
  eval_cmd->add_option("--out", ev_out, "also write metrics JSON here");

  // ---- composite ----
  auto* comp_cmd = app.add_subcommand(
      "composite", "erode+feather a mask and composite fg over bg");
  std::string cp_fg, cp_bg, cp_mask, cp_out;
  long cp_radius = -1;
  double cp_sigma = -1.0;
  comp_cmd->add_option("--fg", cp_fg, "foreground PPM")->required();
  comp_cmd->add_option("--bg", cp_bg, "background PPM")->required();
  comp_cmd->add_option("--mask", cp_mask, "mask PGM")->required();
  comp_cmd->add_option("--radius", cp_radius,
                       "erosion radius in px (default: 4 at width 512, scaled)");
  comp_cmd->add_option("--sigma", cp_sigma,
                       "feather sigma in px (default: 3 at width 512, scaled)");
  comp_cmd->add_option("--out", cp_out, "output PPM")->required();

  CLI11_PARSE(app, argc, argv);

  if (synth_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "synth";
    ctx.manifest_path = (fs::path(sy_out) / "manifest.json").string();
    return run_command(ctx, [&] {
      synth::StyleSpec src = sy_spec_src.empty()
                                 ? synth::default_source_spec()
                                 : synth::load_style_spec(sy_spec_src);
      synth::StyleSpec tgt = sy_spec_tgt.empty()
                                 ? synth::default_target_spec()
                                 : synth::load_style_spec(sy_spec_tgt);
      fs::create_directories(sy_out);
      ctx.has_seed = true;
      ctx.seed = sy_seed;
      ctx.config["frames"] = sy_frames;
      ctx.config["spec_src"] = json::parse(synth::style_spec_to_json(src));
      ctx.config["spec_tgt"] = json::parse(synth::style_spec_to_json(tgt));
      ctx.inputs["spec_src"] = sy_spec_src.empty() ? "<builtin>" : sy_spec_src;
      ctx.inputs["spec_tgt"] = sy_spec_tgt.empty() ? "<builtin>" : sy_spec_tgt;

      synth::PairedCorpora corpora =
          synth::paired_style_corpora(sy_seed, src, tgt, sy_frames);
      const std::string source_path = (fs::path(sy_out) / "source.csv").string();
      const std::string target_path = (fs::path(sy_out) / "target.csv").string();
      const std::string oracle_path = (fs::path(sy_out) / "oracle.csv").string();
      for (const std::string* p : {&source_path, &target_path, &oracle_path})
        ctx.written.push_back(*p);
      params::write_sequence_csv(source_path, corpora.source);
      params::write_sequence_csv(target_path, corpora.target);
      params::write_sequence_csv(oracle_path, corpora.oracle);
      ctx.outputs["source"] = source_path;
      ctx.outputs["target"] = target_path;
      ctx.outputs["oracle"] = oracle_path;
    });
  }

  if (train_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "train";
    ctx.manifest_path = default_manifest_path(tr_out);
    return run_command(ctx, [&] {
      trainer::TrainConfig config;
      if (!tr_config.empty()) config = trainer::load_train_config(tr_config);
      if (tr_seed_set) config.seed = tr_seed;
      if (tr_frames_set) config.train_frames = tr_frames;
      config.validate();
      const std::string history_path =
          tr_history.empty() ? tr_out + ".history.csv" : tr_history;

      ctx.has_seed = true;
      ctx.seed = config.seed;
      ctx.config = json::parse(trainer::train_config_to_json(config));
      ctx.inputs["config"] = tr_config.empty() ? "<default>" : tr_config;
      ctx.inputs["source"] = tr_source;
      ctx.inputs["target"] = tr_target;

      const params::ExpressionSequence source = params::read_sequence(tr_source);
      const params::ExpressionSequence target = params::read_sequence(tr_target);
      trainer::TrainResult result = trainer::train(config, source, target);

      ctx.written.push_back(tr_out);
      ctx.written.push_back(history_path);
      trainer::save_checkpoint(result.checkpoint, tr_out);
      trainer::write_history_csv(history_path, result.history);
      ctx.outputs["checkpoint"] = tr_out;
      ctx.outputs["history"] = history_path;
    });
  }

  if (translate_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "translate";
    ctx.manifest_path = default_manifest_path(tl_out);
    return run_command(ctx, [&] {
      trainer::Checkpoint ckpt = trainer::load_checkpoint(tl_ckpt);
      const params::ExpressionSequence input = params::read_sequence(tl_input);
      ctx.config["direction"] = tl_direction;
      ctx.config["train_config"] =
          json::parse(trainer::train_config_to_json(ckpt.config));
      ctx.inputs["checkpoint"] = tl_ckpt;
      ctx.inputs["input"] = tl_input;

      params::ExpressionSequence out = trainer::translate_sequence(
          ckpt, input, trainer::direction_from_string(tl_direction));
      ctx.written.push_back(tl_out);
      write_sequence_auto(out, tl_out);
      ctx.outputs["translated"] = tl_out;
    });
  }

  if (interp_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "interpolate";
    ctx.manifest_path = default_manifest_path(in_out);
    return run_command(ctx, [&] {
      const params::ExpressionSequence source = params::read_sequence(in_source);
      const params::ExpressionSequence translated =
          params::read_sequence(in_translated);
      ctx.config["alpha"] = in_alpha;
      ctx.inputs["source"] = in_source;
      ctx.inputs["translated"] = in_translated;

      params::ExpressionSequence out =
          trainer::interpolate_style(source, translated, in_alpha);
      ctx.written.push_back(in_out);
      write_sequence_auto(out, in_out);
      ctx.outputs["blended"] = in_out;
    });
  }

  if (eval_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "eval";
    ctx.manifest_path =
        ev_out.empty() ? ev_translated + ".eval.manifest.json"
                       : default_manifest_path(ev_out);
    return run_command(ctx, [&] {
      const params::ExpressionSequence source = params::read_sequence(ev_source);
      const params::ExpressionSequence translated =
          params::read_sequence(ev_translated);
      const params::ExpressionSequence oracle = params::read_sequence(ev_oracle);
      const params::ExpressionSequence target = params::read_sequence(ev_target);
      ctx.inputs["source"] = ev_source;
      ctx.inputs["translated"] = ev_translated;
      ctx.inputs["oracle"] = ev_oracle;
      ctx.inputs["target"] = ev_target;

      const params::NormStats target_stats =
          params::normalize_sequence(target).second;
      const synth::StyleMetrics metrics =
          synth::eval_style(source, translated, target_stats, oracle,
                            params::MouthIndexSet::default_set());
      const std::string text = synth::metrics_to_json(metrics);
      std::cout << text << "\n";
      if (!ev_out.empty()) {
        ctx.written.push_back(ev_out);
        std::ofstream out(ev_out, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + ev_out + "'");
        out << text << "\n";
        ctx.outputs["metrics"] = ev_out;
      }
    });
  }

  if (comp_cmd->parsed()) {
    RunContext ctx;
    ctx.command = "composite";
    ctx.manifest_path = default_manifest_path(cp_out);
    return run_command(ctx, [&] {
      const compositor::ImageBuffer fg = compositor::read_ppm(cp_fg);
      const compositor::ImageBuffer bg = compositor::read_ppm(cp_bg);
      compositor::SoftMask mask = compositor::read_pgm_mask(cp_mask);

      // Defaults are 4 px / 3 px at width 512, scaled proportionally.
      const double scale = static_cast<double>(fg.width) / 512.0;
      const std::size_t radius =
          cp_radius >= 0 ? static_cast<std::size_t>(cp_radius)
                         : static_cast<std::size_t>(std::lround(4.0 * scale));
      const double sigma = cp_sigma >= 0.0 ? cp_sigma : 3.0 * scale;

      ctx.config["radius"] = radius;
      ctx.config["sigma"] = sigma;
      ctx.inputs["fg"] = cp_fg;
      ctx.inputs["bg"] = cp_bg;
      ctx.inputs["mask"] = cp_mask;

      mask = compositor::feather_mask(compositor::erode_mask(mask, radius),
                                      sigma);
      const compositor::ImageBuffer out = compositor::composite(fg, bg, mask);
      ctx.written.push_back(cp_out);
      compositor::write_ppm(out, cp_out);
      ctx.outputs["composite"] = cp_out;
    });
  }

  return 1;  // unreachable: a subcommand is required
}
