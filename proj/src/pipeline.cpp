#include "trajattr/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "trajattr/error.hpp"
#include "trajattr/hash.hpp"

namespace trajattr {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_int(std::string_view key, std::string_view value, int line) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError(fmt::format("'{}' expects an integer, got '{}'", key, value), line);
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value, int line) {
  const std::string s(value);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ParseError(fmt::format("'{}' expects a number, got '{}'", key, value), line);
  }
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  if (!out) throw Error("failed writing " + p.string());
}

std::vector<Eigen::VectorXd> vectors_of(const std::vector<TrajectoryEmbedding>& embs) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(embs.size());
  for (const auto& e : embs) out.push_back(e.vector);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

RunConfig RunConfig::parse(std::string_view text, const fs::path& base_dir) {
  RunConfig cfg;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError("duplicate key '" + key + "'", line_no);

    if (key == "layout") {
      cfg.layout = value == "default" || base_dir.empty() || fs::path(value).is_absolute()
                       ? std::string(value)
                       : (base_dir / value).string();
    } else if (key == "n_traj") {
      cfg.n_traj = parse_int<int>(key, value, line_no);
    } else if (key == "max_len") {
      cfg.max_len = parse_int<int>(key, value, line_no);
    } else if (key == "mix") {
      cfg.mix = std::string(value);
    } else if (key == "data_seed") {
      cfg.data_seed = parse_int<std::uint64_t>(key, value, line_no);
    } else if (key == "d_model") {
      cfg.encoder.d_model = parse_int<int>(key, value, line_no);
    } else if (key == "lr") {
      cfg.encoder.learning_rate = parse_real(key, value, line_no);
    } else if (key == "epochs") {
      cfg.encoder.epochs = parse_int<int>(key, value, line_no);
    } else if (key == "clip_norm") {
      cfg.encoder.clip_norm = parse_real(key, value, line_no);
    } else if (key == "encoder_seed") {
      cfg.encoder.seed = parse_int<std::uint64_t>(key, value, line_no);
    } else if (key == "k_min") {
      cfg.k_min = parse_int<int>(key, value, line_no);
    } else if (key == "k_max") {
      cfg.k_max = value == "auto" ? 0 : parse_int<int>(key, value, line_no);
    } else if (key == "cluster_seed") {
      cfg.cluster_seed = parse_int<std::uint64_t>(key, value, line_no);
    } else if (key == "M") {
      cfg.normalizer = value == "auto" ? 0.0 : parse_real(key, value, line_no);
      if (value != "auto" && !(cfg.normalizer > 0.0)) {
        throw ParseError("'M' must be 'auto' or a positive number", line_no);
      }
    } else if (key == "T_soft") {
      cfg.temperature = parse_real(key, value, line_no);
    } else if (key == "distance") {
      if (value == "wasserstein") {
        cfg.distance = SimplexDistance::Wasserstein;
      } else if (value == "tv") {
        cfg.distance = SimplexDistance::TotalVariation;
      } else {
        throw ParseError("'distance' must be 'wasserstein' or 'tv'", line_no);
      }
    } else if (key == "gamma") {
      cfg.rl.gamma = parse_real(key, value, line_no);
    } else if (key == "tol") {
      cfg.rl.tol = parse_real(key, value, line_no);
    } else if (key == "r_pess") {
      cfg.rl.r_pess = parse_real(key, value, line_no);
    } else if (key == "eval_states") {
      cfg.eval_states = std::string(value);
    } else if (key == "top_n") {
      cfg.top_n = parse_int<int>(key, value, line_no);
    } else if (key == "out") {
      cfg.out = base_dir.empty() || fs::path(value).is_absolute() ? std::string(value)
                                                                  : (base_dir / value).string();
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
    if (end == text.size()) break;
  }
  for (const char* seed_key : {"data_seed", "encoder_seed", "cluster_seed"}) {
    if (!seen.count(seed_key)) {
      throw ConfigError(fmt::format("config must set '{}' explicitly", seed_key));
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read config file " + path);
  }
  return parse(text, fs::path(path).parent_path());
}

std::string RunConfig::to_text() const {
  std::string text;
  text += "layout = " + layout + "\n";
  text += fmt::format("n_traj = {}\nmax_len = {}\nmix = {}\ndata_seed = {}\n", n_traj, max_len, mix,
                     data_seed);
  text += fmt::format("d_model = {}\nlr = {}\nepochs = {}\nclip_norm = {}\nencoder_seed = {}\n",
                     encoder.d_model, num(encoder.learning_rate), encoder.epochs,
                     num(encoder.clip_norm), encoder.seed);
  text += fmt::format("k_min = {}\nk_max = {}\ncluster_seed = {}\n", k_min,
                     k_max == 0 ? std::string("auto") : std::to_string(k_max), cluster_seed);
  text += fmt::format("M = {}\nT_soft = {}\ndistance = {}\n",
                     normalizer == 0.0 ? std::string("auto") : num(normalizer), num(temperature),
                     distance == SimplexDistance::Wasserstein ? "wasserstein" : "tv");
  text += fmt::format("gamma = {}\ntol = {}\nr_pess = {}\n", num(rl.gamma), num(rl.tol),
                     num(rl.r_pess));
  text += fmt::format("eval_states = {}\ntop_n = {}\nout = {}\n", eval_states, top_n, out);
  return text;
}

void RunConfig::validate() const {
  auto require = [](bool ok, std::string_view msg) {
    if (!ok) throw ConfigError(std::string(msg));
  };
  require(n_traj >= 1 && n_traj <= 100'000, "n_traj must lie in [1, 100000]");
  require(max_len >= 1 && max_len <= 10'000, "max_len must lie in [1, 10000]");
  try {
    BehaviorMix::parse(mix).validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("mix: ") + e.what());
  }
  require(encoder.d_model >= 2 && encoder.d_model <= 1024, "d_model must lie in [2, 1024]");
  require(encoder.learning_rate > 0.0 && encoder.learning_rate <= 1.0, "lr must lie in (0, 1]");
  require(encoder.epochs >= 0 && encoder.epochs <= 100'000, "epochs must lie in [0, 100000]");
  require(encoder.clip_norm > 0.0, "clip_norm must be positive");
  require(k_min >= 1, "k_min must be at least 1");
  require(k_min <= n_traj, "k_min must not exceed n_traj");
  require(k_max == 0 || (k_max >= k_min && k_max <= n_traj), "k_max must lie in [k_min, n_traj]");
  require(normalizer >= 0.0, "M must be positive");
  require(temperature > 0.0 && std::isfinite(temperature), "T_soft must be positive");
  require(rl.gamma > 0.0 && rl.gamma < 1.0, "gamma must lie in (0, 1)");
  require(rl.tol > 0.0, "tol must be positive");
  require(std::isfinite(rl.r_pess), "r_pess must be finite");
  require(eval_states == "reachable" || eval_states == "starts",
          "eval_states must be 'reachable' or 'starts'");
  require(top_n >= 1, "top_n must be at least 1");
}

void RunConfig::override_seeds(std::uint64_t seed) {
  data_seed = seed;
  encoder.seed = seed;
  cluster_seed = seed;
}

int RunConfig::effective_k_max() const {
  if (k_max > 0) return k_max;
  return std::max(k_min, std::min(16, n_traj / 3));
}

double RunConfig::effective_normalizer() const {
  return normalizer > 0.0 ? normalizer : static_cast<double>(n_traj);
}

GridLayout RunConfig::load_layout() const {
  return layout == "default" ? GridLayout::default_layout() : GridLayout::load(layout);
}

std::string RunConfig::fingerprint() const {
  return Fingerprint().add(stage_fingerprint(*this, Stage::Report)).hex();
}

// ------------------------------------------------------------------ stages

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::GenData: return "gen-data";
    case Stage::TrainEncoder: return "train-encoder";
    case Stage::Encode: return "encode";
    case Stage::Cluster: return "cluster";
    case Stage::Embed: return "embed";
    case Stage::TrainPolicies: return "train-policies";
    case Stage::Attribute: return "attribute";
    case Stage::Report: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string stage_fingerprint(const RunConfig& cfg, Stage s) {
  Fingerprint fp;
  fp.add(stage_name(s));
  switch (s) {
    case Stage::GenData:
      fp.add(cfg.load_layout().to_text()).add(cfg.n_traj).add(cfg.max_len);
      fp.add(BehaviorMix::parse(cfg.mix).to_string()).add(cfg.data_seed);
      break;
    case Stage::TrainEncoder:
      fp.add(stage_fingerprint(cfg, Stage::GenData));
      fp.add(cfg.encoder.d_model).add(cfg.encoder.learning_rate).add(cfg.encoder.epochs);
      fp.add(cfg.encoder.clip_norm).add(cfg.encoder.seed);
      break;
    case Stage::Encode:
      fp.add(stage_fingerprint(cfg, Stage::TrainEncoder));
      break;
    case Stage::Cluster:
      fp.add(stage_fingerprint(cfg, Stage::Encode));
      fp.add(cfg.k_min).add(cfg.effective_k_max()).add(cfg.cluster_seed);
      break;
    case Stage::Embed:
      fp.add(stage_fingerprint(cfg, Stage::Cluster));
      fp.add(cfg.effective_normalizer()).add(cfg.temperature);
      break;
    case Stage::TrainPolicies:
      fp.add(stage_fingerprint(cfg, Stage::Cluster));
      fp.add(cfg.rl.fingerprint());
      break;
    case Stage::Attribute:
      fp.add(stage_fingerprint(cfg, Stage::Embed));
      fp.add(stage_fingerprint(cfg, Stage::TrainPolicies));
      fp.add(static_cast<int>(cfg.distance)).add(cfg.eval_states).add(cfg.top_n);
      break;
    case Stage::Report:
      fp.add(stage_fingerprint(cfg, Stage::Attribute));
      break;
  }
  return fp.hex();
}

PipelineError::PipelineError(Stage stage, const std::string& what)
    : Error(fmt::format("stage '{}' failed: {}", stage_name(stage), what)), stage_(stage) {}

fs::path RunPaths::cluster_policy(int j) const {
  return policies() / fmt::format("cluster_{}.json", j);
}

fs::path RunPaths::stamp(Stage s) const {
  return root / "stamps" / (std::string(stage_name(s)) + ".fp");
}

std::vector<fs::path> RunPaths::outputs(Stage s) const {
  switch (s) {
    case Stage::GenData: return {layout(), dataset()};
    case Stage::TrainEncoder: return {encoder(), encoder_loss()};
    case Stage::Encode: return {embeddings()};
    case Stage::Cluster: return {clusters(), centroids()};
    case Stage::Embed: return {data_embeddings()};
    case Stage::TrainPolicies: return {original_policy()};
    case Stage::Attribute: return {attributions()};
    case Stage::Report: return {metrics()};
  }
  return {};
}

void write_embeddings_csv(const std::vector<TrajectoryEmbedding>& embs, const std::string& path) {
  std::string out = "traj_id";
  const auto dim = embs.empty() ? 0 : embs.front().vector.size();
  for (Eigen::Index j = 0; j < dim; ++j) out += fmt::format(",e{}", j);
  out += '\n';
  for (const auto& e : embs) {
    out += std::to_string(e.traj_id);
    for (Eigen::Index j = 0; j < e.vector.size(); ++j) out += fmt::format(",{}", e.vector[j]);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<TrajectoryEmbedding> read_embeddings_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<TrajectoryEmbedding> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    TrajectoryEmbedding e;
    try {
      std::getline(ss, cell, ',');
      e.traj_id = std::stoi(cell);
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw SchemaError(fmt::format("{} line {}: malformed row", path, lineno));
    }
    e.vector = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.push_back(std::move(e));
  }
  return out;
}

ExplanationSuite load_suite(const RunPaths& paths, SimplexDistance distance) {
  ExplanationSuite suite;
  suite.distance = distance;
  suite.original = read_policy(paths.original_policy().string());
  suite.config_fingerprint = suite.original.config_fingerprint;
  const auto embeddings = read_data_embeddings_csv(paths.data_embeddings().string());
  std::map<int, DataEmbedding> complements;
  bool have_original = false;
  for (const auto& e : embeddings) {
    if (e.complement_of) {
      complements[*e.complement_of] = e;
    } else {
      suite.original_embedding = e;
      have_original = true;
    }
  }
  if (!have_original) throw SchemaError("data embeddings lack the original row");
  for (const auto& [j, emb] : complements) {
    if (j != suite.n_clusters()) throw SchemaError("complement embeddings are not dense in cluster id");
    ExplanationEntry entry;
    entry.cluster_id = j;
    entry.policy = read_policy(paths.cluster_policy(j).string());
    entry.complement_embedding = emb;
    suite.entries.push_back(std::move(entry));
  }
  check_suite(suite);
  return suite;
}

std::vector<int> select_eval_states(const GridLayout& layout, std::string_view selector) {
  std::vector<int> out;
  if (selector == "starts") {
    for (const Cell& c : layout.start_states()) out.push_back(layout.index(c.row, c.col));
  } else {
    for (const GridState& s : reachable_nonterminal_states(layout)) out.push_back(layout.index(s));
  }
  return out;
}

namespace {

nlohmann::json attribution_json(const AttributionResult& r, const GridLayout& layout) {
  const Cell c = layout.cell_of(r.state);
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [k, d] : r.data_distances) w[std::to_string(k)] = d;
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : r.exemplars) {
    ex.push_back({{"traj_id", e.traj_id}, {"tier", e.tier}, {"manhattan", e.manhattan}});
  }
  return {{"state", {c.row, c.col}},
          {"state_index", r.state},
          {"a_orig", action_name(static_cast<Action>(r.a_orig))},
          {"distances", r.action_distances},
          {"K", r.candidates},
          {"w", std::move(w)},
          {"c_final", r.c_final ? nlohmann::json(*r.c_final) : nlohmann::json(nullptr)},
          {"exemplars", std::move(ex)}};
}

void run_stage(const RunConfig& cfg, const RunPaths& paths, Stage stage) {
  const GridLayout layout = cfg.load_layout();
  switch (stage) {
    case Stage::GenData: {
      const Dataset d = generate_offline_dataset(layout, BehaviorMix::parse(cfg.mix), cfg.n_traj,
                                                 cfg.max_len, cfg.data_seed);
      write_file(paths.layout(), layout.to_text());
      write_dataset(d, paths.dataset().string());
      break;
    }
    case Stage::TrainEncoder: {
      const Encoder enc = train_encoder(read_dataset(paths.dataset().string()), cfg.encoder);
      save_encoder(enc, paths.encoder().string());
      std::string loss = "epoch,loss\n";
      for (std::size_t e = 0; e < enc.loss_history.size(); ++e) {
        loss += fmt::format("{},{}\n", e, enc.loss_history[e]);
      }
      write_file(paths.encoder_loss(), loss);
      break;
    }
    case Stage::Encode: {
      const Encoder enc = load_encoder(paths.encoder().string());
      write_embeddings_csv(encode_all(enc, read_dataset(paths.dataset().string())),
                           paths.embeddings().string());
      break;
    }
    case Stage::Cluster: {
      const auto embs = read_embeddings_csv(paths.embeddings().string());
      const ClusterSet cs =
          xmeans(vectors_of(embs), cfg.k_min, cfg.effective_k_max(), cfg.cluster_seed);
      std::vector<int> ids;
      for (const auto& e : embs) ids.push_back(e.traj_id);
      write_clusters_csv(cs, ids, paths.clusters().string());
      write_centroids_csv(cs, paths.centroids().string());
      break;
    }
    case Stage::Embed: {
      const auto embs = read_embeddings_csv(paths.embeddings().string());
      const ClusterSet cs = read_clusters(paths.clusters().string(), paths.centroids().string());
      check_partition(cs, embs.size());
      std::vector<DataEmbedding> out;
      out.push_back(data_embedding(embs, cfg.effective_normalizer(), cfg.temperature));
      for (int j = 0; j < cs.n_clusters(); ++j) {
        std::vector<Eigen::VectorXd> kept;
        for (std::size_t i = 0; i < embs.size(); ++i) {
          if (cs.assignments[i] != j) kept.push_back(embs[i].vector);
        }
        if (kept.empty()) throw ContractViolation(fmt::format("complement of cluster {} is empty", j));
        DataEmbedding e = data_embedding(kept, cfg.effective_normalizer(), cfg.temperature);
        e.complement_of = j;
        out.push_back(std::move(e));
      }
      write_data_embeddings_csv(out, paths.data_embeddings().string());
      break;
    }
    case Stage::TrainPolicies: {
      const Dataset d = read_dataset(paths.dataset().string());
      const auto embs = read_embeddings_csv(paths.embeddings().string());
      const ClusterSet cs = read_clusters(paths.clusters().string(), paths.centroids().string());
      SuiteOptions opt;
      opt.rl = cfg.rl;
      opt.normalizer = cfg.effective_normalizer();
      opt.temperature = cfg.temperature;
      const ExplanationSuite suite = train_explanation_suite(d, layout, cs, embs, opt);
      fs::remove_all(paths.policies());
      fs::create_directories(paths.policies());
      write_policy(suite.original, paths.original_policy().string());
      for (const auto& e : suite.entries) write_policy(e.policy, paths.cluster_policy(e.cluster_id).string());
      break;
    }
    case Stage::Attribute: {
      const Dataset d = read_dataset(paths.dataset().string());
      const ClusterSet cs = read_clusters(paths.clusters().string(), paths.centroids().string());
      const ExplanationSuite suite = load_suite(paths, cfg.distance);
      if (suite.n_clusters() != cs.n_clusters()) {
        throw SchemaError("policy count does not match cluster count");
      }
      const auto members = cs.members();
      const auto eval = select_eval_states(layout, cfg.eval_states);
      const MetricsReport rep = metrics_report(suite, eval, start_distribution(layout));

      nlohmann::json states = nlohmann::json::array();
      for (int s : eval) {
        AttributionResult r = attribute(s, suite);
        if (r.c_final) {
          std::vector<int> ids;
          for (int i : members[*r.c_final]) ids.push_back(d.trajectories[i].id);
          r.exemplars = select_top_trajectories(ids, d, layout, s, r.a_orig, cfg.top_n);
        }
        states.push_back(attribution_json(r, layout));
      }
      std::vector<double> freq;
      for (std::size_t k = 1; k < rep.rows.size(); ++k) freq.push_back(*rep.rows[k].frequency);
      nlohmann::json doc = {
          {"n_clusters", suite.n_clusters()},
          {"summary",
           {{"n_eval", rep.n_eval},
            {"n_attributed", rep.n_attributed},
            {"none_fraction", rep.none_fraction},
            {"frequencies", freq}}},
          {"states", std::move(states)}};
      write_file(paths.attributions(), doc.dump(1) + "\n");
      break;
    }
    case Stage::Report: {
      const ExplanationSuite suite = load_suite(paths, cfg.distance);
      const auto eval = select_eval_states(layout, cfg.eval_states);
      write_file(paths.metrics(), metrics_csv(metrics_report(suite, eval, start_distribution(layout))));
      break;
    }
  }
}

}  // namespace

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, Stage last) {
  cfg.validate();
  const RunPaths paths{cfg.out};
  fs::create_directories(paths.root / "stamps");
  write_file(paths.config(), cfg.to_text());

  std::vector<StageOutcome> outcomes;
  for (Stage stage : kAllStages) {
    const std::string fp = stage_fingerprint(cfg, stage);
    bool cached = stage != Stage::Report && fs::exists(paths.stamp(stage));
    if (cached) {
      std::string stored = read_file(paths.stamp(stage));
      cached = trim(stored) == fp;
      for (const auto& p : paths.outputs(stage)) cached = cached && fs::exists(p);
    }
    if (!cached) {
      fs::remove(paths.stamp(stage));
      try {
        run_stage(cfg, paths, stage);
      } catch (const std::exception& e) {
        std::string artifacts;
        for (const auto& p : paths.outputs(stage)) artifacts += " " + p.string();
        throw PipelineError(stage, fmt::format("{} (artifacts:{})", e.what(), artifacts));
      }
      write_file(paths.stamp(stage), fp + "\n");
    }
    outcomes.push_back({stage, cached});
    if (stage == last) break;
  }
  return outcomes;
}

}  // namespace trajattr
