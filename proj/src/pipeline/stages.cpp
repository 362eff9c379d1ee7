#include "stages.hpp"

#include <algorithm>

#include "concept_canvas/acquisition/harvest.hpp"
#include "concept_canvas/began/began.hpp"
#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "concept_canvas/common/hash.hpp"
#include "concept_canvas/common/rng.hpp"
#include "concept_canvas/image/image.hpp"
#include "concept_canvas/text/corpus.hpp"

namespace canvas::pipeline::detail {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Config& cfg(const StageContext& ctx) { return ctx.run.config; }

std::vector<image::ImageRecord> images_in(const fs::path& dir, image::Provenance provenance) {
  if (!fs::is_directory(dir)) return {};
  return acquisition::load_image_directory(dir, provenance);
}

image::ImageRecord record_from_file(const fs::path& png, const std::string& id, image::Provenance provenance) {
  image::ImageRecord r;
  r.id = id;
  r.pixels = image::read_image(png);
  r.provenance = provenance;
  r.source = {"run", "", png.filename().string()};
  return r;
}

void stage_corpus(StageContext& ctx) {
  const fs::path in = ctx.dir / "corpus";
  const auto corpus = text::load_corpus(in / "corpus.jsonl");
  const auto stopwords = fs::exists(in / "stopwords.txt") ? text::StopwordList::from_file(in / "stopwords.txt")
                                                          : text::StopwordList::english();
  const auto tokens = text::tokenize_corpus(corpus, stopwords);
  const auto vocab = text::build_vocabulary(tokens, cfg(ctx).vocabulary());
  const auto matrix = text::tfidf_vectorize(tokens, vocab);

  const fs::path out = ctx.dir / stage_directory(Stage::kCorpus);
  write_json_atomic(out / "vocabulary.json", vocab.terms());
  write_json_atomic(out / "tfidf.json", {{"row_ids", matrix.row_ids},
                                         {"cols", matrix.cols},
                                         {"labels", text::binary_labels(tokens)},
                                         {"values", matrix.values}});
  std::size_t empty_rows = 0;
  for (const auto& t : tokens.tokens) empty_rows += t.empty();
  write_json_atomic(out / "summary.json", {{"documents", corpus.size()},
                                           {"theme", corpus.count(text::Label::kTheme)},
                                           {"other", corpus.count(text::Label::kOther)},
                                           {"vocabulary_size", vocab.size()},
                                           {"vocabulary_hash", vocab.hash()},
                                           {"empty_documents", empty_rows}});
  ctx.progress({{"documents", corpus.size()}, {"vocabulary_size", vocab.size()}});
}

void stage_dtm(StageContext& ctx) {
  const fs::path features = ctx.dir / stage_directory(Stage::kCorpus);
  const text::Vocabulary vocab(read_json(features / "vocabulary.json").get<std::vector<std::string>>());
  const auto stored = read_json(features / "tfidf.json");
  text::DocTermMatrix matrix;
  matrix.row_ids = stored.at("row_ids").get<std::vector<std::string>>();
  matrix.cols = stored.at("cols").get<std::size_t>();
  matrix.values = stored.at("values").get<std::vector<double>>();
  const auto labels = stored.at("labels").get<std::vector<int>>();

  const auto model = text::train_dtm(matrix, labels, cfg(ctx).dtm());
  const auto terms = text::extract_discriminative_terms(model, vocab, cfg(ctx).as<std::size_t>("dtm.k_pos"),
                                                        cfg(ctx).as<std::size_t>("dtm.k_neg"));
  const fs::path out = ctx.dir / stage_directory(Stage::kDtm);
  write_json_atomic(out / "model.json", text::save_dtm(model, vocab));
  json terms_json = terms;
  terms_json["train_accuracy"] = model.train_accuracy;
  write_json_atomic(out / "terms.json", terms_json);
  ctx.progress({{"train_accuracy", model.train_accuracy}, {"final_loss", model.final_loss}});
}

void stage_harvest(StageContext& ctx) {
  const auto terms = effective_terms(ctx.dir, ctx.run);
  auto provider = ctx.provider();
  const auto result = acquisition::harvest_term_images(terms, cfg(ctx).harvest(), *provider);
  const fs::path out = ctx.dir / stage_directory(Stage::kHarvest);
  acquisition::write_records(out, result.records);
  json stats = result.stats;
  write_json_atomic(out / "stats.json", stats);
  ctx.progress(stats);
}

void stage_dam_train(StageContext& ctx) {
  const auto config = cfg(ctx).dam();
  const auto records = acquisition::read_records(ctx.dir / stage_directory(Stage::kHarvest));
  dam::VggBackbone backbone(cfg(ctx).as<int>("dam.width_divisor"), cfg(ctx).seed());
  const auto weights = cfg(ctx).as<std::string>("dam.backbone_weights");
  if (!weights.empty()) {
    backbone.load_weights(weights);
  } else if (!cfg(ctx).as<bool>("dam.random_init")) {
    fail(ErrorKind::kInvalidArgument,
         "DAM fine-tuning needs pretrained backbone weights: set dam.backbone_weights, or dam.random_init=true "
         "to train from scratch");
  }
  const auto model = dam::train_dam(acquisition::normalize_images(records, config.image_side), config, backbone);
  const fs::path out = ctx.dir / stage_directory(Stage::kDamTrain);
  model.save(out / "model", {{"backbone_weights", weights.empty() ? "random" : "pretrained"}});
  json report = model.report();
  write_json_atomic(out / "report.json", report);
  ctx.progress(report);
}

void stage_ranking(StageContext& ctx) {
  const auto model = dam::DamModel::load(ctx.dir / stage_directory(Stage::kDamTrain) / "model");
  auto pool = images_in(ctx.dir / "corpus" / "articles", image::Provenance::kArticle);
  std::string source = "articles";
  if (pool.empty()) {
    pool = acquisition::read_records(ctx.dir / stage_directory(Stage::kHarvest));
    source = "harvest";
  }
  const auto normalized = acquisition::normalize_images(pool, model.config().image_side);
  std::vector<double> scores;
  scores.reserve(normalized.size());
  for (const auto& r : normalized) scores.push_back(dam::score_image(model, r.pixels));
  const auto ranked = dam::rank_by_score(pool, scores, cfg(ctx).as<std::size_t>("rank.top_k"));

  const fs::path out = ctx.dir / stage_directory(Stage::kRanking);
  json items = json::array();
  for (const auto& r : ranked) {
    image::write_png(out / "images" / (r.record.id + ".png"), r.record.pixels);
    items.push_back({{"id", r.record.id},
                     {"rank", r.rank},
                     {"score", r.score},
                     {"provenance", image::to_string(r.record.provenance)},
                     {"query", r.record.source.query},
                     {"file", "rank/images/" + r.record.id + ".png"}});
  }
  write_json_atomic(out / "ranking.json", {{"source", source}, {"pool_size", pool.size()}, {"items", items}});
  ctx.progress({{"source", source}, {"pool_size", pool.size()}, {"presented", items.size()}});
}

std::string concept_query(const RunState& run) {
  const auto* d = run.decision(Stage::kConceptSelection);
  if (d != nullptr && d->selection.is_object() && d->selection.contains("query")) {
    const auto q = d->selection.at("query").get<std::string>();
    if (!q.empty()) return q;
  }
  const auto configured = run.config.as<std::string>("concept.query");
  return configured.empty() ? run.theme : configured;
}

const std::string& concept_id(const RunState& run) {
  const auto* d = run.decision(Stage::kConceptSelection);
  if (d == nullptr || d->ids.empty()) fail(ErrorKind::kInternal, "concept selection decision missing");
  return d->ids.front();
}

void stage_concept_harvest(StageContext& ctx) {
  const std::string query = concept_query(ctx.run);
  auto provider = ctx.provider();
  auto result = acquisition::harvest_concept_images(query, cfg(ctx).as<std::size_t>("concept.target_count"),
                                                    cfg(ctx).harvest(), *provider);
  const auto& selected = concept_id(ctx.run);
  auto& records = result.records;
  if (std::none_of(records.begin(), records.end(), [&](const auto& r) { return r.id == selected; })) {
    auto r = record_from_file(ctx.dir / "rank" / "images" / (selected + ".png"), selected,
                              image::Provenance::kArticle);
    r.source = {"selection", query, "rank/images/" + selected + ".png"};
    records.push_back(std::move(r));
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  }
  const fs::path out = ctx.dir / stage_directory(Stage::kConceptHarvest);
  acquisition::write_records(out, records);
  json stats = result.stats;
  stats["query"] = query;
  stats["concept_id"] = selected;
  stats["training_images"] = records.size();
  write_json_atomic(out / "stats.json", stats);
  ctx.progress(stats);
}

void stage_gan_train(StageContext& ctx) {
  const auto config = cfg(ctx).began();
  const auto records = acquisition::read_records(ctx.dir / stage_directory(Stage::kConceptHarvest));
  began::TrainOptions options;
  options.checkpoint_dir = ctx.dir / "gan" / "checkpoints";
  options.keep_checkpoints = cfg(ctx).as<int>("began.keep_checkpoints");
  options.should_stop = [&](int) { return ctx.should_stop && ctx.should_stop(); };
  options.on_step = [&](const began::StepRecord& s) {
    if (s.iteration % config.checkpoint_interval == 0 || s.iteration == config.iterations) {
      ctx.progress({{"iteration", s.iteration},
                    {"loss_real", s.loss_real},
                    {"loss_fake", s.loss_fake},
                    {"k", s.k},
                    {"m_global", s.m_global}});
    }
  };
  auto result = began::train_began(acquisition::normalize_images(records, config.image_side), config, options);
  if (!result.completed) {
    throw Interrupted("GAN training stopped at iteration " + std::to_string(result.iterations_done));
  }
  const fs::path out = ctx.dir / stage_directory(Stage::kGanTrain);
  result.model.save(out);
  write_text_atomic(out / "history.csv", began::history_csv(result.history));
}

void stage_generation(StageContext& ctx) {
  const auto model = began::BeganModel::load(ctx.dir / stage_directory(Stage::kGanTrain));
  const auto seed = Rng::derive(cfg(ctx).seed(), 0x67656e).next_u64();
  const auto candidates = began::sample_candidates(model, cfg(ctx).as<std::size_t>("generation.count"), seed);
  const fs::path out = ctx.dir / stage_directory(Stage::kGeneration);
  json items = json::array();
  for (const auto& c : candidates) {
    image::write_png(out / (c.record.id + ".png"), c.record.pixels);
    items.push_back({{"id", c.record.id}, {"z", json(c.z)}, {"file", "gan/samples/" + c.record.id + ".png"}});
  }
  write_json_atomic(out / "candidates.json", {{"items", items}});
  ctx.progress({{"candidates", items.size()}});
}

void stage_style_build(StageContext& ctx) {
  std::string source = "exemplars";
  auto exemplars = images_in(ctx.dir / "corpus" / "style", image::Provenance::kArticle);
  if (exemplars.empty()) {
    source = "articles";
    exemplars = images_in(ctx.dir / "corpus" / "articles", image::Provenance::kArticle);
  }
  if (exemplars.empty()) {
    source = "ranking";
    for (const auto& item : read_ranking(ctx.dir).at("items").get<std::vector<json>>()) {
      const auto id = item.at("id").get<std::string>();
      exemplars.push_back(record_from_file(ctx.dir / "rank" / "images" / (id + ".png"), id,
                                           image::parse_provenance(item.at("provenance").get<std::string>())));
    }
  }
  if (exemplars.empty()) fail(ErrorKind::kDataError, "no style exemplars available");
  const auto ref = style::build_style_reference(exemplars, cfg(ctx).as<int>("style.cell_side"));
  const fs::path out = ctx.dir / stage_directory(Stage::kStyleBuild);
  image::write_png(out / "reference.png", ref.mosaic);
  write_json_atomic(out / "reference.json",
                    {{"rows", ref.layout.rows},
                     {"cols", ref.layout.cols},
                     {"cell_side", ref.layout.cell_side},
                     {"source", source},
                     {"source_ids", ref.source_ids}});
  ctx.progress({{"exemplars", exemplars.size()}, {"source", source}});
}

void stage_stylize(StageContext& ctx) {
  std::vector<image::ImageRecord> contents;
  if (ctx.run.mode == Mode::kGenerative) {
    const auto* d = ctx.run.decision(Stage::kCandidateSelection);
    if (d == nullptr) fail(ErrorKind::kInternal, "candidate selection decision missing");
    for (const auto& id : d->ids) {
      contents.push_back(
          record_from_file(ctx.dir / "gan" / "samples" / (id + ".png"), id, image::Provenance::kGenerated));
    }
  } else {
    const auto& id = concept_id(ctx.run);
    contents.push_back(record_from_file(ctx.dir / "rank" / "images" / (id + ".png"), id, image::Provenance::kArticle));
  }
  const auto reference = read_reference(ctx.dir);
  const auto backbone = style_backbone(ctx.dir);
  const auto config = cfg(ctx).style();
  const fs::path out = ctx.dir / stage_directory(Stage::kStylize);
  json items = json::array();
  for (std::size_t i = 0; i < contents.size(); ++i) {
    if (ctx.should_stop && ctx.should_stop()) throw Interrupted("stylize stopped");
    const auto styled = stylize_into(out, contents[i], reference, config, backbone);
    items.push_back(styled.summary);
    json progress = styled.summary;
    progress["done"] = i + 1;
    progress["total"] = contents.size();
    ctx.progress(progress);
  }
  write_json_atomic(out / "outputs.json", {{"items", items}});
}

}  // namespace

bool is_image_file(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

text::DiscriminativeTermSet read_terms(const fs::path& dir) {
  return read_json(dir / stage_directory(Stage::kDtm) / "terms.json").get<text::DiscriminativeTermSet>();
}

text::DiscriminativeTermSet effective_terms(const fs::path& dir, const RunState& run) {
  auto terms = read_terms(dir);
  const auto* d = run.decision(Stage::kTermReview);
  if (d == nullptr || !d->selection.contains("positives")) return terms;
  auto weight_of = [&](const std::string& term) {
    for (const auto& list : {terms.positives, terms.negatives}) {
      for (const auto& [t, w] : list) {
        if (t == term) return w;
      }
    }
    return 0.0;
  };
  text::DiscriminativeTermSet edited;
  for (const auto& t : d->selection.at("positives")) edited.positives.emplace_back(t.get<std::string>(), weight_of(t));
  for (const auto& t : d->selection.at("negatives")) edited.negatives.emplace_back(t.get<std::string>(), weight_of(t));
  return edited;
}

json read_ranking(const fs::path& dir) { return read_json(dir / stage_directory(Stage::kRanking) / "ranking.json"); }

json read_candidates(const fs::path& dir) {
  return read_json(dir / stage_directory(Stage::kGeneration) / "candidates.json");
}

json read_styled(const fs::path& dir) { return read_json(dir / stage_directory(Stage::kStylize) / "outputs.json"); }

style::StyleReference read_reference(const fs::path& dir) {
  const fs::path base = dir / stage_directory(Stage::kStyleBuild);
  if (!fs::exists(base / "reference.png")) {
    fail(ErrorKind::kInvalidArgument, "run has no style reference yet (STYLE_BUILD has not run)");
  }
  const auto meta = read_json(base / "reference.json");
  style::StyleReference ref;
  ref.mosaic = image::read_image(base / "reference.png");
  ref.layout = {meta.at("rows").get<int>(), meta.at("cols").get<int>(), meta.at("cell_side").get<int>()};
  ref.source_ids = meta.at("source_ids").get<std::vector<std::string>>();
  return ref;
}

dam::VggBackbone style_backbone(const fs::path& dir) {
  const fs::path model = dir / stage_directory(Stage::kDamTrain) / "model";
  if (!fs::exists(model / "model.json")) {
    fail(ErrorKind::kInvalidArgument, "run has no trained DAM backbone yet (DAM_TRAIN has not run)");
  }
  return dam::DamModel::load(model).backbone();
}

StyledOutput stylize_into(const fs::path& out_dir, const image::ImageRecord& content,
                          const style::StyleReference& reference, const style::StyleConfig& config,
                          const dam::VggBackbone& backbone) {
  const auto result = style::stylize(content, reference, config, backbone);
  const std::string& id = result.output.id;
  StyledOutput out{out_dir / (id + ".png"), json::object()};
  image::write_png(out.png, result.output.pixels);
  write_text_atomic(out_dir / (id + ".losses.csv"), style::losses_csv(result.losses));
  const auto& last = result.losses.empty() ? style::StepLoss{} : result.losses.back();
  const auto& best = result.losses.empty() ? style::StepLoss{} : result.losses.at(result.best_step);
  out.summary = {{"id", id},
                 {"content_id", content.id},
                 {"output_side", config.output_side},
                 {"steps", config.steps},
                 {"best_step", result.best_step},
                 {"initial_total", result.losses.empty() ? 0.0 : result.losses.front().total},
                 {"best_total", best.total},
                 {"last_total", last.total},
                 {"aborted", result.aborted},
                 {"warning", result.warning}};
  write_json_atomic(out_dir / (id + ".json"), out.summary);
  return out;
}

void run_stage(Stage stage, StageContext& ctx) {
  switch (stage) {
    case Stage::kCorpus: return stage_corpus(ctx);
    case Stage::kDtm: return stage_dtm(ctx);
    case Stage::kHarvest: return stage_harvest(ctx);
    case Stage::kDamTrain: return stage_dam_train(ctx);
    case Stage::kRanking: return stage_ranking(ctx);
    case Stage::kConceptHarvest: return stage_concept_harvest(ctx);
    case Stage::kGanTrain: return stage_gan_train(ctx);
    case Stage::kGeneration: return stage_generation(ctx);
    case Stage::kStyleBuild: return stage_style_build(ctx);
    case Stage::kStylize: return stage_stylize(ctx);
    default: fail(ErrorKind::kInternal, "stage " + std::string(to_string(stage)) + " is not automated");
  }
}

void write_final(const fs::path& dir, const RunState& run, const std::string& styled_id) {
  const fs::path styled = dir / stage_directory(Stage::kStylize);
  const auto summary = read_json(styled / (styled_id + ".json"));
  const fs::path out = dir / stage_directory(Stage::kFinalSelection);
  fs::remove_all(out);
  write_bytes_atomic(out / "final.png", read_bytes(styled / (styled_id + ".png")));

  json terms = effective_terms(dir, run);
  json provenance = {{"theme", run.theme},
                     {"mode", to_string(run.mode)},
                     {"seed", run.config.seed()},
                     {"terms", terms},
                     {"concept", {{"id", concept_id(run)}}},
                     {"content_id", summary.at("content_id")},
                     {"final_id", styled_id},
                     {"final_sha256", sha256_file(out / "final.png")},
                     {"style", json(run.config.style())},
                     {"style_reference", read_json(dir / stage_directory(Stage::kStyleBuild) / "reference.json")}};
  for (const auto& item : read_ranking(dir).at("items").get<std::vector<json>>()) {
    if (item.at("id") == concept_id(run)) {
      provenance["concept"]["rank"] = item.at("rank");
      provenance["concept"]["score"] = item.at("score");
    }
  }
  if (run.mode == Mode::kGenerative) {
    provenance["concept"]["query"] = concept_query(run);
    json chosen = json::array();
    const auto* d = run.decision(Stage::kCandidateSelection);
    for (const auto& item : read_candidates(dir).at("items").get<std::vector<json>>()) {
      if (std::find(d->ids.begin(), d->ids.end(), item.at("id").get<std::string>()) != d->ids.end()) {
        chosen.push_back(item);
      }
    }
    provenance["candidates"] = chosen;
  }
  write_json_atomic(out / "provenance.json", provenance);
}

}  // namespace canvas::pipeline::detail
