#include "finrag/eval.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "finrag/executor.hpp"

namespace finrag::eval {

namespace {

executor::TableContext table_context_of(const preprocess::QARecord& record) {
  if (record.table.size() < 2) return {};
  return preprocess::linearize_table(record.table).context;
}

llmgen::NormalizedAnswer to_answer(const executor::ExecutionResult& result) {
  if (result.is_boolean()) {
    return llmgen::YesNoAnswer{std::get<bool>(result.final_value())};
  }
  return llmgen::NumberAnswer{result.number(), false};
}

}  // namespace

std::vector<RecordOutcome> judge_records(const std::vector<preprocess::QARecord>& records,
                                         const std::vector<Prediction>& predictions,
                                         double epsilon) {
  std::vector<RecordOutcome> out;
  out.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& record = records[i];
    const auto& pred = predictions[i];
    RecordOutcome oc;
    oc.id = record.id;
    if (pred.failure) {
      oc.failure = *pred.failure;
      out.push_back(std::move(oc));
      continue;
    }
    try {
      if (pred.program) {
        dsl::Program gold = dsl::parse_program(record.gold_program);
        oc.program_correct = program_match(*pred.program, gold);
        auto result = executor::execute_program(*pred.program, table_context_of(record));
        oc.execution_correct = llmgen::answers_match(to_answer(result), record.gold_answer,
                                                     epsilon);
      } else if (pred.answer_text) {
        auto parsed = llmgen::parse_answer(*pred.answer_text);
        if (std::holds_alternative<llmgen::Unparseable>(parsed)) {
          oc.failure = "unparseable_answer";
        } else {
          oc.execution_correct = llmgen::answers_match(parsed, record.gold_answer, epsilon);
        }
      } else {
        oc.failure = "empty_prediction";
      }
    } catch (const Error& e) {
      oc.execution_correct = false;
      if (pred.program) oc.program_correct = false;
      oc.failure = e.kind();
    }
    out.push_back(std::move(oc));
  }
  return out;
}

std::optional<double> execution_accuracy(const std::vector<preprocess::QARecord>& records,
                                         const std::vector<Prediction>& predictions,
                                         double epsilon) {
  if (records.empty()) return std::nullopt;
  auto outcomes = judge_records(records, predictions, epsilon);
  size_t hits = 0;
  for (const auto& oc : outcomes) hits += oc.execution_correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

bool program_match(const dsl::Program& predicted, const dsl::Program& gold) {
  if (predicted.steps.size() != gold.steps.size()) return false;
  auto literal_eq = [](double a, double b) {
    return std::fabs(a - b) <= 1e-6 * std::max({1.0, std::fabs(a), std::fabs(b)});
  };
  for (size_t i = 0; i < gold.steps.size(); ++i) {
    const auto& p = predicted.steps[i];
    const auto& g = gold.steps[i];
    if (p.op != g.op) return false;
    for (int a = 0; a < 2; ++a) {
      const auto& pa = p.args[a];
      const auto& ga = g.args[a];
      if (pa.index() != ga.index()) return false;
      if (const auto* pl = std::get_if<dsl::Literal>(&pa)) {
        if (!literal_eq(pl->value, std::get<dsl::Literal>(ga).value)) return false;
      } else if (pa != ga) {
        return false;
      }
    }
  }
  return true;
}

std::optional<double> program_accuracy(const std::vector<preprocess::QARecord>& records,
                                       const std::vector<Prediction>& predictions) {
  size_t total = 0, hits = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (!predictions[i].program && !predictions[i].failure) continue;  // free-form answer
    ++total;
    if (!predictions[i].program) continue;  // failed generation counts as a miss
    try {
      dsl::Program gold = dsl::parse_program(records[i].gold_program);
      if (program_match(*predictions[i].program, gold)) ++hits;
    } catch (const dsl::DslError&) {
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(total);
}

SubsetSplit split_subsets(const std::vector<preprocess::QARecord>& records,
                          const SubsetRules& rules,
                          const std::map<std::string, std::vector<std::string>>* retrieved_ids) {
  SubsetSplit out;
  const char* kSubsets[] = {"table_only",   "text_only",  "table_text_mixed",
                            "long_context", "short_context", "single_step", "multi_step"};
  for (const char* name : kSubsets) out.subsets[name];

  for (const auto& record : records) {
    const std::vector<std::string>* facts = &record.gold_facts;
    if (rules.modality_from_retrieved) {
      if (!retrieved_ids || !retrieved_ids->count(record.id)) {
        out.excluded.emplace_back(record.id, "no retrieved facts for modality rule");
        continue;
      }
      facts = &retrieved_ids->at(record.id);
    }
    if (facts->empty()) {
      out.excluded.emplace_back(record.id, "no gold facts for modality rule");
      continue;
    }
    size_t steps = 0;
    try {
      steps = dsl::parse_program(record.gold_program).steps.size();
    } catch (const dsl::DslError&) {
      out.excluded.emplace_back(record.id, "gold program does not parse");
      continue;
    }

    bool any_table = false, any_text = false;
    for (const auto& id : *facts) {
      if (id.rfind("table_", 0) == 0) {
        any_table = true;
      } else {
        any_text = true;
      }
    }
    const char* modality = any_table && any_text ? "table_text_mixed"
                           : any_table           ? "table_only"
                                                 : "text_only";
    out.subsets[modality].push_back(record.id);

    size_t tokens = count_tokens(record.question);
    for (const auto& s : preprocess::record_sentences(record)) tokens += count_tokens(s.text);
    out.subsets[tokens > rules.long_context_token_threshold ? "long_context" : "short_context"]
        .push_back(record.id);

    out.subsets[steps == 1 ? "single_step" : "multi_step"].push_back(record.id);
  }
  return out;
}

EvalReport make_report(const std::vector<preprocess::QARecord>& records,
                       const std::vector<Prediction>& predictions, double epsilon,
                       const SubsetRules& rules,
                       const std::map<std::string, std::string>& config_echo,
                       const std::map<std::string, std::vector<std::string>>* retrieved_ids) {
  EvalReport report;
  report.config_echo = config_echo;
  report.config_echo["epsilon"] = format_number(epsilon);
  report.config_echo["long_context_token_threshold"] =
      std::to_string(rules.long_context_token_threshold);

  auto outcomes = judge_records(records, predictions, epsilon);
  std::map<std::string, const RecordOutcome*> by_id;
  size_t exec_hits = 0, prog_hits = 0, prog_total = 0;
  for (const auto& oc : outcomes) {
    by_id[oc.id] = &oc;
    exec_hits += oc.execution_correct ? 1 : 0;
    if (oc.failure) report.failures.emplace_back(oc.id, *oc.failure);
  }
  report.evaluated = records.size();
  bool program_backend = false;
  for (const auto& p : predictions) {
    if (p.program) program_backend = true;
  }
  if (!records.empty()) {
    report.execution_accuracy =
        static_cast<double>(exec_hits) / static_cast<double>(records.size());
  }
  if (program_backend) {
    for (const auto& oc : outcomes) {
      ++prog_total;
      if (oc.program_correct.value_or(false)) ++prog_hits;
    }
    if (prog_total > 0) {
      report.program_accuracy =
          static_cast<double>(prog_hits) / static_cast<double>(prog_total);
    }
  }

  auto split = split_subsets(records, rules, retrieved_ids);
  for (const auto& [name, ids] : split.subsets) {
    SubsetStats stats;
    stats.count = ids.size();
    if (!ids.empty()) {
      size_t e = 0, p = 0;
      for (const auto& id : ids) {
        const RecordOutcome* oc = by_id.at(id);
        e += oc->execution_correct ? 1 : 0;
        p += oc->program_correct.value_or(false) ? 1 : 0;
      }
      stats.execution_accuracy = static_cast<double>(e) / static_cast<double>(ids.size());
      if (program_backend) {
        stats.program_accuracy = static_cast<double>(p) / static_cast<double>(ids.size());
      }
    }
    report.per_subset[name] = stats;
  }
  for (const auto& [id, reason] : split.excluded) {
    report.failures.emplace_back(id, "subset_excluded: " + reason);
  }
  return report;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

nlohmann::ordered_json accuracy_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::string accuracy_csv(const std::optional<double>& v) {
  return v ? format_number(*v) : "";
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json doc;
    doc["evaluated"] = report.evaluated;
    doc["execution_accuracy"] = accuracy_json(report.execution_accuracy);
    doc["program_accuracy"] = accuracy_json(report.program_accuracy);
    nlohmann::ordered_json subsets;
    for (const auto& [name, stats] : report.per_subset) {
      subsets[name] = {{"count", stats.count},
                       {"execution_accuracy", accuracy_json(stats.execution_accuracy)},
                       {"program_accuracy", accuracy_json(stats.program_accuracy)}};
    }
    doc["per_subset"] = subsets;
    doc["config"] = report.config_echo;
    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    for (const auto& [id, kind] : report.failures) {
      failures.push_back({{"id", id}, {"kind", kind}});
    }
    doc["failures"] = failures;
    return doc.dump(2) + "\n";
  }

  std::string out = "subset,count,execution_accuracy,program_accuracy\n";
  out += "overall," + std::to_string(report.evaluated) + ',' +
         accuracy_csv(report.execution_accuracy) + ',' +
         accuracy_csv(report.program_accuracy) + '\n';
  for (const auto& [name, stats] : report.per_subset) {
    out += name + ',' + std::to_string(stats.count) + ',' +
           accuracy_csv(stats.execution_accuracy) + ',' +
           accuracy_csv(stats.program_accuracy) + '\n';
  }
  out += "# config:";
  for (const auto& [key, value] : report.config_echo) {
    out += ' ' + key + '=' + value;
  }
  out += '\n';
  return out;
}

EvalReport parse_report_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw preprocess::IoError(std::string("report is not valid JSON: ") + e.what());
  }
  EvalReport report;
  report.evaluated = doc.value("evaluated", 0u);
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  if (doc.contains("execution_accuracy")) {
    report.execution_accuracy = opt(doc["execution_accuracy"]);
  }
  if (doc.contains("program_accuracy")) report.program_accuracy = opt(doc["program_accuracy"]);
  if (doc.contains("per_subset")) {
    for (auto it = doc["per_subset"].begin(); it != doc["per_subset"].end(); ++it) {
      SubsetStats stats;
      stats.count = it.value().value("count", 0u);
      stats.execution_accuracy = opt(it.value().value("execution_accuracy", nlohmann::json()));
      stats.program_accuracy = opt(it.value().value("program_accuracy", nlohmann::json()));
      report.per_subset[it.key()] = stats;
    }
  }
  if (doc.contains("config")) {
    for (auto it = doc["config"].begin(); it != doc["config"].end(); ++it) {
      report.config_echo[it.key()] =
          it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
    }
  }
  if (doc.contains("failures")) {
    for (const auto& f : doc["failures"]) {
      report.failures.emplace_back(f.value("id", ""), f.value("kind", ""));
    }
  }
  return report;
}

void emit_report(const EvalReport& report, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw preprocess::IoError("cannot write '" + path + "'");
  std::string text = render_report(report, format);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace finrag::eval
