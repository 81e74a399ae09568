#include <CLI11.hpp>

#include "exg/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-band ExG tokenization, pretraining and evaluation toolkit"};
  app.require_subcommand(1);

  exg::cmd::Options opts;
  std::string picked;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "experiment config (JSON)");
    sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opts.seed_override, "seed override")
        ->each([&](const std::string&) { opts.has_seed_override = true; });
    sub->callback([&, sub] { picked = sub->get_name(); });
  };

  for (const char* name : {"synth", "pretrain", "ablate-bands", "ablate-objectives",
                           "ablate-patch", "scale-study"})
    add_common(app.add_subcommand(name));

  auto* fin = app.add_subcommand("finetune");
  add_common(fin);
  fin->add_option("--checkpoint", opts.checkpoint, "pretrained checkpoint");
  fin->add_option("--seeds", opts.n_seeds, "number of fine-tuning seeds");

  for (const char* name : {"eval", "saliency"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub);
    sub->add_option("--checkpoint", opts.checkpoint, "trained task model")->required();
  }

  CLI11_PARSE(app, argc, argv);
  return exg::cmd::run_command(picked, opts);
}
