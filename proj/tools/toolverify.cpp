// Command-line front end: datagen, precompute-vq, select, call, eval, stats.

#include <iostream>

#include <CLI11.hpp>

#include "toolverify/cli.hpp"

namespace tv = toolverify;

namespace {

void add_backend_flags(CLI::App* cmd, tv::cli::RunConfig& c) {
  cmd->add_option("--backend", c.default_backend, "Default backend: endpoint URL or script:<path> (default: $TOOLVERIFY_ENDPOINT)");
  cmd->add_option_function<std::vector<std::string>>(
         "--stage-backend",
         [&c](const std::vector<std::string>& specs) {
           for (const auto& s : specs) {
             auto eq = s.find('=');
             if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--stage-backend", "expected TAG=SPEC, got '" + s + "'");
             c.stage_backends[s.substr(0, eq)] = s.substr(eq + 1);
           }
         },
         "Per-stage backend, as TAG=SPEC (repeatable)")
      ->delimiter(',');
  cmd->add_option("--temperature", c.temperature);
  cmd->add_option("--top-p", c.top_p);
  cmd->add_option("--max-tokens", c.max_tokens);
  cmd->add_option("--prompts", c.prompts_dir, "Directory of prompt template overrides")->check(CLI::ExistingDirectory);
  cmd->add_option("--seed", c.seed);
}

void add_pipeline_flags(CLI::App* cmd, tv::cli::RunConfig& c) {
  cmd->add_option("--registry", c.registry_path)->required()->check(CLI::ExistingFile);
  cmd->add_option("--cache", c.cache_path, "Verification-question cache file");
  cmd->add_flag("--tool-verify,!--no-tool-verify", c.tool_verify, "Verify the tool choice (default on)");
  cmd->add_flag("--param-verify,!--no-param-verify", c.param_verify, "Verify parameter values (default on)");
  cmd->add_flag("--condition-on-instruction", c.condition_on_instruction, "Generate questions per instruction instead of from the cache");
  cmd->add_flag("--model-construction", c.model_construction, "Ask the model to write the call instead of filling the template");
  cmd->add_flag("--lenient-none", c.lenient_none, "Treat an absent parameter as equal to the none token");
  cmd->add_flag("--randomize-verify-order", c.randomize_verify_order);
  cmd->add_option("--shots", c.n_shots, "Demonstrations per parameter prompt");
  cmd->add_option("--transcripts", c.transcripts_dir, "Write every prompt and response to this directory");
  cmd->add_flag_callback("--no-verify", [&c] {
    c.tool_verify = false;
    c.param_verify = false;
  }, "Turn off both verification steps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tool selection and calling with self-verification"};
  app.require_subcommand(1);
  tv::cli::RunConfig config;
  std::string instruction;
  std::string task_path;
  std::string dataset_path;

  auto* datagen = app.add_subcommand("datagen", "Generate a tool-selection training set");
  datagen->add_option("--registry", config.registry_path)->required()->check(CLI::ExistingFile);
  datagen->add_option("--out", config.output_dir)->required();
  datagen->add_option("--hard-ratio", config.hard_ratio)->check(CLI::Range(0.0, 1.0));
  datagen->add_option("-k", config.k, "Random distractors per sample");
  datagen->add_option("--instructions-per-tool", config.instructions_per_tool);
  datagen->add_option("--max-note-tokens", config.max_note_tokens);
  datagen->add_flag("--shuffle,!--no-shuffle", config.shuffle, "Shuffle candidate order (default on)");
  datagen->add_flag("--synthesize", config.synthesize, "Grow the registry with generated and related tools first");
  datagen->add_option("--rounds", config.library_rounds);
  datagen->add_option("--per-round", config.library_per_round);
  add_backend_flags(datagen, config);

  auto* precompute = app.add_subcommand("precompute-vq", "Fill the verification-question cache for every tool pair");
  precompute->add_option("--registry", config.registry_path)->required()->check(CLI::ExistingFile);
  precompute->add_option("--cache", config.cache_path)->required();
  add_backend_flags(precompute, config);

  auto* select = app.add_subcommand("select", "Select a tool for one instruction");
  select->add_option("instruction", instruction)->required();
  add_pipeline_flags(select, config);
  add_backend_flags(select, config);

  auto* call = app.add_subcommand("call", "Select a tool and build the call for one instruction");
  call->add_option("instruction", instruction)->required();
  add_pipeline_flags(call, config);
  add_backend_flags(call, config);

  auto* eval = app.add_subcommand("eval", "Evaluate a task file");
  eval->add_option("tasks", task_path)->required()->check(CLI::ExistingFile);
  eval->add_flag("--sweep", config.sweep, "Run all four verification settings");
  eval->add_option("--workers", config.workers)->check(CLI::PositiveNumber);
  eval->add_option("--log", config.log_path, "Per-sample log (JSON lines)");
  eval->add_option("--report", config.report_path, "Report rows as JSON");
  eval->add_option("--live-host", config.live_hosts, "Score by executing calls against this host (repeatable)");
  add_pipeline_flags(eval, config);
  add_backend_flags(eval, config);

  auto* stats = app.add_subcommand("stats", "Summarize a generated dataset");
  stats->add_option("dataset", dataset_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats->parsed()) return tv::cli::cmd_stats(dataset_path, std::cout);
    auto session = tv::cli::open_session(config);
    if (datagen->parsed()) return tv::cli::cmd_datagen(session, std::cout);
    if (precompute->parsed()) return tv::cli::cmd_precompute_vq(session, std::cout);
    if (select->parsed()) return tv::cli::cmd_select(session, instruction, std::cout);
    if (call->parsed()) return tv::cli::cmd_call(session, instruction, std::cout);
    if (eval->parsed()) return tv::cli::cmd_eval(session, task_path, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
