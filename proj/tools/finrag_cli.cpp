// Command-line front end: every pipeline stage is independently invocable.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "finrag/dsl.hpp"
#include "finrag/eval.hpp"
#include "finrag/executor.hpp"
#include "finrag/llmgen.hpp"
#include "finrag/pipeline.hpp"
#include "finrag/preprocess.hpp"
#include "finrag/retrieval.hpp"
#include "finrag/synthetic.hpp"

namespace {

using namespace finrag;

preprocess::LoadResult load_or_die(const std::string& path) {
  auto result = preprocess::load_dataset(path);
  for (const auto& f : result.failures) {
    std::cerr << "warning: skipped record " << f.record_index << ": " << f.message << "\n";
  }
  return result;
}

const preprocess::QARecord* find_record(const std::vector<preprocess::QARecord>& records,
                                        const std::string& id) {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

int cmd_ingest(const std::string& dataset) {
  auto result = load_or_die(dataset);
  std::cout << "records: " << result.records.size() << "\n"
            << "failures: " << result.failures.size() << "\n";
  size_t with_table = 0, single_step = 0;
  for (const auto& r : result.records) {
    if (r.table.size() >= 2) ++with_table;
    if (dsl::parse_program(r.gold_program).steps.size() == 1) ++single_step;
  }
  std::cout << "with table: " << with_table << "\n"
            << "single-step programs: " << single_step << "\n";
  return result.failures.empty() ? 0 : 1;
}

int cmd_linearize(const std::string& dataset, const std::string& id) {
  auto result = load_or_die(dataset);
  for (const auto& r : result.records) {
    if (!id.empty() && r.id != id) continue;
    std::cout << "# " << r.id << "\n";
    if (r.table.size() < 2) {
      std::cout << "(no table)\n";
      continue;
    }
    for (const auto& s : preprocess::linearize_table(r.table).sentences) {
      std::cout << s.id << "\t" << s.text << "\n";
    }
  }
  return 0;
}

int cmd_index_build(const std::string& definitions, const std::string& out, size_t dim) {
  auto defs = retrieval::load_definitions(definitions);
  std::vector<std::string> ids, texts;
  for (const auto& d : defs) {
    ids.push_back(d.term);
    texts.push_back(d.summary);
  }
  retrieval::HashedEmbedder embedder(dim, 1);
  auto m = retrieval::l2_normalize(embedder.embed_all(ids, texts));
  retrieval::write_embeddings(out, m);
  std::cout << "wrote " << m.n << " x " << m.d << " embeddings to " << out << "\n";
  return 0;
}

int cmd_retrieve(const std::string& dataset, const std::string& definitions,
                 const std::string& embeddings, const std::string& id, size_t k_internal,
                 size_t k_external, size_t dim) {
  auto result = load_or_die(dataset);
  retrieval::HashedEmbedder embedder(dim, 1);

  std::optional<retrieval::FlatIndex> index;
  std::vector<retrieval::DefinitionEntry> defs;
  if (!definitions.empty()) {
    defs = retrieval::load_definitions(definitions);
    retrieval::EmbeddingMatrix m;
    if (!embeddings.empty()) {
      m = retrieval::read_embeddings(embeddings);
      if (!m.normalized) m = retrieval::l2_normalize(m);
    } else {
      std::vector<std::string> ids, texts;
      for (const auto& d : defs) {
        ids.push_back(d.term);
        texts.push_back(d.summary);
      }
      m = retrieval::l2_normalize(embedder.embed_all(ids, texts));
    }
    index = retrieval::FlatIndex::build(std::move(m));
  }

  for (const auto& r : result.records) {
    if (!id.empty() && r.id != id) continue;
    std::cout << "# " << r.id << "\n";
    auto ranked = retrieval::rank_sentences(
        pipeline::score_sentences(embedder, r.question, preprocess::record_sentences(r)),
        k_internal);
    for (const auto& item : ranked.items) {
      std::cout << "internal\t" << item.id << "\t" << format_number(item.score) << "\t"
                << item.payload << "\n";
    }
    if (index && index->size() > 0) {
      auto q = embedder.embed(r.question);
      double norm = 0.0;
      for (float x : q) norm += static_cast<double>(x) * x;
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (float& x : q) x = static_cast<float>(x / norm);
        auto hits = index->search(q, std::min(k_external, index->size()));
        for (const auto& item : hits.items) {
          std::cout << "external\t" << item.id << "\t" << format_number(item.score) << "\n";
        }
        std::vector<double> scores;
        for (const auto& item : hits.items) scores.push_back(item.score);
        auto stats = retrieval::summary_stats(scores);
        std::cout << "external top-" << scores.size() << " similarity: median "
                  << format_number(stats.median) << ", mean " << format_number(stats.mean)
                  << "\n";
      }
    }
  }
  return 0;
}

int cmd_execute(const std::string& program, const std::string& dataset, const std::string& id) {
  executor::TableContext table;
  if (!dataset.empty() && !id.empty()) {
    auto result = load_or_die(dataset);
    const auto* rec = find_record(result.records, id);
    if (!rec) {
      std::cerr << "error: no record '" << id << "'\n";
      return 1;
    }
    if (rec->table.size() >= 2) table = preprocess::linearize_table(rec->table).context;
  }
  auto parsed = dsl::parse_program(program);
  auto result = executor::execute_program(parsed, table);
  for (size_t i = 0; i < result.step_values.size(); ++i) {
    const auto& v = result.step_values[i];
    std::cout << "#" << i << " = "
              << (std::holds_alternative<bool>(v) ? (std::get<bool>(v) ? "yes" : "no")
                                                  : format_number(std::get<double>(v)))
              << "\n";
  }
  std::cout << "answer: " << result.answer_text() << "\n";
  return 0;
}

struct TrainArgs {
  std::string out;
  std::string dataset;
  std::string loss_curve;
  size_t synthetic = 0;
  size_t dim = 64;
  size_t epochs = 200;
  double lr = 1e-3;
  size_t batch_size = 16;
  double dropout = 0.0;
  double grad_clip = 1.0;
  size_t top_k_internal = 3;
  bool all_facts = false;
  uint64_t seed = 7;
  bool stop_at_full_accuracy = true;
};

int cmd_train_decoder(const TrainArgs& args) {
  std::vector<decoder::TrainingExample> examples;
  if (args.synthetic > 0) {
    examples = synthetic::make_synthetic_task(args.synthetic, args.dim, args.seed);
  } else if (!args.dataset.empty()) {
    auto result = load_or_die(args.dataset);
    retrieval::HashedEmbedder embedder(args.dim, 1);
    for (const auto& rec : result.records) {
      // candidates built the same way the decoder backend builds them
      std::vector<preprocess::RankedSentence> facts;
      if (args.all_facts) {
        facts = preprocess::record_sentences(rec);
      } else {
        auto ranked = retrieval::rank_sentences(
            pipeline::score_sentences(embedder, rec.question,
                                      preprocess::record_sentences(rec)),
            args.top_k_internal);
        for (const auto& item : ranked.items) {
          facts.push_back({item.id, item.score, item.payload});
        }
      }
      decoder::TrainingExample ex;
      ex.id = rec.id;
      ex.cands = pipeline::build_candidates(rec, facts, embedder);
      try {
        ex.gold = dsl::encode_program(ex.cands.vocab, dsl::parse_program(rec.gold_program));
      } catch (const Error& e) {
        std::cerr << "warning: skipping " << rec.id << ": " << e.what() << "\n";
        continue;
      }
      examples.push_back(std::move(ex));
    }
  } else {
    std::cerr << "error: need --synthetic N or --dataset\n";
    return 1;
  }
  if (examples.empty()) {
    std::cerr << "error: no trainable examples\n";
    return 1;
  }

  decoder::TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch_size;
  cfg.dropout = args.dropout;
  cfg.grad_clip_norm = args.grad_clip;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;
  cfg.stop_at_full_accuracy = args.stop_at_full_accuracy;

  auto initial = decoder::DecoderParams::init(args.dim, args.seed);
  auto result = decoder::train(initial, examples, cfg);
  double accuracy = decoder::sequence_accuracy(result.params, examples);
  std::cout << "examples: " << examples.size() << "\n"
            << "epochs run: " << result.curve.size() << "\n"
            << "first epoch loss: " << format_number(result.curve.front().mean_loss) << "\n"
            << "final epoch loss: " << format_number(result.curve.back().mean_loss) << "\n"
            << "sequence accuracy: " << format_number(accuracy) << "\n";
  decoder::save_checkpoint(args.out, result.params,
                           {{"dim", std::to_string(args.dim)},
                            {"seed", std::to_string(args.seed)},
                            {"epochs", std::to_string(result.curve.size())}});
  std::cout << "checkpoint: " << args.out << "\n";
  if (!args.loss_curve.empty()) {
    decoder::write_loss_curve(args.loss_curve, result.curve);
    std::cout << "loss curve: " << args.loss_curve << "\n";
  }
  return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& dataset,
                 const std::string& id, size_t top_k_internal) {
  auto ck = decoder::load_checkpoint(checkpoint);
  auto result = load_or_die(dataset);
  retrieval::HashedEmbedder embedder(ck.params.dim, 1);
  for (const auto& rec : result.records) {
    if (!id.empty() && rec.id != id) continue;
    auto ranked = retrieval::rank_sentences(
        pipeline::score_sentences(embedder, rec.question, preprocess::record_sentences(rec)),
        top_k_internal);
    std::vector<preprocess::RankedSentence> facts;
    for (const auto& item : ranked.items) facts.push_back({item.id, item.score, item.payload});
    auto cands = pipeline::build_candidates(rec, facts, embedder);
    try {
      auto program = decoder::generate(ck.params, cands);
      std::cout << rec.id << "\t" << dsl::serialize_program(program) << "\n";
    } catch (const Error& e) {
      std::cout << rec.id << "\tERROR: " << e.what() << "\n";
    }
  }
  return 0;
}

struct EvalArgs {
  std::string dataset;
  std::string backend = "gold";
  std::string definitions;
  std::string embeddings;
  std::string checkpoint;
  std::string endpoint;
  std::string report_format = "json";
  std::string out;
  std::string trace;
  std::string inputs;
  std::string prompt_mode = "few";
  double epsilon = llmgen::kDefaultEpsilon;
  size_t top_k_internal = 3;
  size_t top_k_external = 3;
  size_t token_budget = 512;
  size_t embed_dim = 64;
  size_t long_context_threshold = 687;
  uint64_t seed = 0;
  bool modality_from_retrieved = false;
  double endpoint_timeout_s = 10.0;
};

int cmd_evaluate(const EvalArgs& args) {
  auto loaded = load_or_die(args.dataset);
  pipeline::PipelineConfig cfg;
  if (args.backend == "gold") {
    cfg.backend = pipeline::Backend::Gold;
  } else if (args.backend == "decoder") {
    cfg.backend = pipeline::Backend::Decoder;
  } else if (args.backend == "endpoint") {
    cfg.backend = pipeline::Backend::Endpoint;
  } else {
    std::cerr << "error: unknown backend '" << args.backend << "'\n";
    return 1;
  }
  cfg.epsilon = args.epsilon;
  cfg.top_k_internal = args.top_k_internal;
  cfg.top_k_external = args.top_k_external;
  cfg.token_budget = args.token_budget;
  cfg.embed_dim = args.embed_dim;
  cfg.seed = args.seed;
  cfg.definitions_path = args.definitions;
  cfg.embeddings_path = args.embeddings;
  cfg.checkpoint_path = args.checkpoint;
  cfg.endpoint = args.endpoint;
  cfg.endpoint_timeout =
      std::chrono::milliseconds(static_cast<long>(args.endpoint_timeout_s * 1000));
  cfg.prompt_mode = args.prompt_mode == "zero" ? llmgen::PromptMode::ZeroShot
                                               : llmgen::PromptMode::FewShot;
  cfg.subset_rules.long_context_token_threshold = args.long_context_threshold;
  cfg.subset_rules.modality_from_retrieved = args.modality_from_retrieved;

  auto result = pipeline::run_pipeline(loaded.records, cfg);
  auto format = args.report_format == "csv" ? eval::ReportFormat::Csv : eval::ReportFormat::Json;
  if (args.out.empty()) {
    std::cout << eval::render_report(result.report, format);
  } else {
    eval::emit_report(result.report, format, args.out);
    std::cout << "report: " << args.out << "\n";
  }
  if (!args.trace.empty()) {
    pipeline::write_trace(args.trace, result.trace);
    std::cout << "trace: " << args.trace << "\n";
  }
  if (!args.inputs.empty()) {
    pipeline::write_inputs(args.inputs, result.inputs);
    std::cout << "generator inputs: " << args.inputs << "\n";
  }
  if (result.report.execution_accuracy) {
    std::cout << "execution accuracy: " << format_number(*result.report.execution_accuracy)
              << "\n";
  }
  if (result.report.program_accuracy) {
    std::cout << "program accuracy: " << format_number(*result.report.program_accuracy) << "\n";
  }
  return 0;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out) {
  std::ifstream file(in);
  if (!file) {
    std::cerr << "error: cannot open '" << in << "'\n";
    return 1;
  }
  std::stringstream buf;
  buf << file.rdbuf();
  auto report = eval::parse_report_json(buf.str());
  auto fmt = format == "csv" ? eval::ReportFormat::Csv : eval::ReportFormat::Json;
  if (out.empty()) {
    std::cout << eval::render_report(report, fmt);
  } else {
    eval::emit_report(report, fmt, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"financial numerical-reasoning QA pipeline"};
  app.set_config("--config", "", "TOML-style config file; flags override it");
  app.require_subcommand(1);

  std::string dataset, id, definitions, embeddings, out, program, checkpoint, format = "csv";
  size_t dim = 64, k_internal = 3, k_external = 3;

  auto* ingest = app.add_subcommand("ingest", "load and validate a dataset");
  ingest->add_option("--dataset", dataset, "dataset JSON")->required();

  auto* linearize = app.add_subcommand("linearize", "print linearized table sentences");
  linearize->add_option("--dataset", dataset, "dataset JSON")->required();
  linearize->add_option("--id", id, "only this record");

  auto* index_build = app.add_subcommand("index-build", "embed definitions into an FEMB file");
  index_build->add_option("--definitions", definitions, "definitions JSON")->required();
  index_build->add_option("--out", out, "output FEMB path")->required();
  index_build->add_option("--dim", dim, "embedding dimension");

  auto* retrieve = app.add_subcommand("retrieve", "rank internal facts and definitions");
  retrieve->add_option("--dataset", dataset, "dataset JSON")->required();
  retrieve->add_option("--definitions", definitions, "definitions JSON");
  retrieve->add_option("--embeddings", embeddings, "precomputed FEMB embeddings");
  retrieve->add_option("--id", id, "only this record");
  retrieve->add_option("--top-k-internal", k_internal, "internal fact count (3 or 5)");
  retrieve->add_option("--top-k-external", k_external, "external definition count");
  retrieve->add_option("--dim", dim, "embedding dimension");

  auto* execute = app.add_subcommand("execute", "run a program string");
  execute->add_option("--program", program, "program string")->required();
  execute->add_option("--dataset", dataset, "dataset JSON for table context");
  execute->add_option("--id", id, "record id for table context");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train-decoder", "train the symbolic generator");
  train->add_option("--out", train_args.out, "checkpoint path")->required();
  train->add_option("--synthetic", train_args.synthetic, "train on N synthetic examples");
  train->add_option("--dataset", train_args.dataset, "train on a dataset's gold programs");
  train->add_option("--dim", train_args.dim, "decoder dimension");
  train->add_option("--epochs", train_args.epochs, "max epochs");
  train->add_option("--lr", train_args.lr, "learning rate");
  train->add_option("--batch-size", train_args.batch_size, "batch size");
  train->add_option("--dropout", train_args.dropout, "input-embedding dropout");
  train->add_option("--grad-clip", train_args.grad_clip, "global gradient-norm clip");
  train->add_option("--top-k-internal", train_args.top_k_internal,
                    "facts per example in dataset mode");
  train->add_flag("--all-facts", train_args.all_facts,
                  "train on every record sentence instead of retrieved facts");
  train->add_option("--seed", train_args.seed, "rng seed");
  train->add_option("--loss-curve", train_args.loss_curve, "write per-epoch CSV here");
  train->add_flag("!--no-early-stop", train_args.stop_at_full_accuracy,
                  "keep training after reaching full accuracy");

  auto* generate = app.add_subcommand("generate", "decode programs with a checkpoint");
  generate->add_option("--checkpoint", checkpoint, "decoder checkpoint")->required();
  generate->add_option("--dataset", dataset, "dataset JSON")->required();
  generate->add_option("--id", id, "only this record");
  generate->add_option("--top-k-internal", k_internal, "internal fact count");

  EvalArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "run the full pipeline and report");
  evaluate->add_option("--dataset", eval_args.dataset, "dataset JSON")->required();
  evaluate->add_option("--backend", eval_args.backend, "gold | decoder | endpoint");
  evaluate->add_option("--definitions", eval_args.definitions, "definitions JSON");
  evaluate->add_option("--embeddings", eval_args.embeddings, "precomputed FEMB embeddings");
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "decoder checkpoint");
  evaluate->add_option("--endpoint", eval_args.endpoint, "generator endpoint URL");
  evaluate->add_option("--endpoint-timeout", eval_args.endpoint_timeout_s,
                       "endpoint timeout in seconds");
  evaluate->add_option("--epsilon", eval_args.epsilon, "answer tolerance");
  evaluate->add_option("--top-k-internal", eval_args.top_k_internal, "3 or 5")
      ->check(CLI::IsMember({3, 5}));
  evaluate->add_option("--top-k-external", eval_args.top_k_external, "external definitions");
  evaluate->add_option("--token-budget", eval_args.token_budget, "generator input budget");
  evaluate->add_option("--embed-dim", eval_args.embed_dim, "reference embedder dimension");
  evaluate->add_option("--report", eval_args.report_format, "json | csv");
  evaluate->add_option("--out", eval_args.out, "report path (stdout otherwise)");
  evaluate->add_option("--trace", eval_args.trace, "JSONL trace path");
  evaluate->add_option("--inputs", eval_args.inputs, "JSONL generator-input audit path");
  evaluate->add_option("--prompt", eval_args.prompt_mode, "zero | few");
  evaluate->add_option("--long-context-threshold", eval_args.long_context_threshold,
                       "token threshold for the long/short split");
  evaluate->add_flag("--modality-from-retrieved", eval_args.modality_from_retrieved,
                     "classify modality from retrieved facts instead of gold facts");
  evaluate->add_option("--seed", eval_args.seed, "rng seed echoed in reports");

  std::string report_in;
  auto* report = app.add_subcommand("report", "re-render a JSON report");
  report->add_option("--in", report_in, "JSON report path")->required();
  report->add_option("--format", format, "json | csv");
  report->add_option("--out", out, "output path (stdout otherwise)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(dataset);
    if (linearize->parsed()) return cmd_linearize(dataset, id);
    if (index_build->parsed()) return cmd_index_build(definitions, out, dim);
    if (retrieve->parsed()) {
      return cmd_retrieve(dataset, definitions, embeddings, id, k_internal, k_external, dim);
    }
    if (execute->parsed()) return cmd_execute(program, dataset, id);
    if (train->parsed()) return cmd_train_decoder(train_args);
    if (generate->parsed()) return cmd_generate(checkpoint, dataset, id, k_internal);
    if (evaluate->parsed()) return cmd_evaluate(eval_args);
    if (report->parsed()) return cmd_report(report_in, format, out);
  } catch (const finrag::Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
