#include "crowdcast/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdcast/errors.hpp"

namespace crowdcast {

using nlohmann::json;

namespace {

const std::vector<std::string> kDatasetNames{"allD", "lowD", "mediumD", "highD", "veryHD"};

std::string fmt(double x) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, end);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            throw ConfigError("unknown config key: " + where + key);
    }
}

json config_to_json(const RunConfig& c) {
    return json{
        {"seed", c.seed},
        {"synth",
         {{"flow", to_string(c.synth.flow)},
          {"density_lo", c.synth.density_lo},
          {"density_hi", c.synth.density_hi},
          {"arena_width", c.synth.arena_width},
          {"arena_height", c.synth.arena_height},
          {"duration_frames", c.synth.duration_frames},
          {"noise_scale", c.synth.noise_scale},
          {"seed", c.synth.seed}}},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
        {"model",
         {{"kind", to_string(c.model.kind)},
          {"embed_dim", c.model.embed_dim},
          {"hidden_dim", c.model.hidden_dim},
          {"neighborhood_side", c.model.pooling.neighborhood_side},
          {"grid", c.model.pooling.grid},
          {"compressed_dim", c.model.pooling.compressed_dim}}},
        {"loss",
         {{"mode", to_string(c.loss.mode)},
          {"lambda", c.loss.lambda},
          {"fixed_radius", c.loss.fixed_radius},
          {"overlap_threshold", c.loss.overlap_threshold}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"batch_size", c.train.batch_size},
          {"max_epochs", c.train.max_epochs},
          {"patience", c.train.patience},
          {"clip_norm", c.train.clip_norm}}}};
}

RunConfig config_from_json(const json& j) {
    check_keys(j, "", {"seed", "synth", "split", "model", "loss", "train"});
    RunConfig c;
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("synth")) {
        const json& s = j["synth"];
        check_keys(s, "synth.", {"flow", "density_lo", "density_hi", "arena_width", "arena_height",
                                 "duration_frames", "noise_scale", "seed"});
        if (s.contains("flow")) c.synth.flow = flow_pattern_from_string(s["flow"].get<std::string>());
        if (s.contains("density_lo")) c.synth.density_lo = s["density_lo"].get<double>();
        if (s.contains("density_hi")) c.synth.density_hi = s["density_hi"].get<double>();
        if (s.contains("arena_width")) c.synth.arena_width = s["arena_width"].get<double>();
        if (s.contains("arena_height")) c.synth.arena_height = s["arena_height"].get<double>();
        if (s.contains("duration_frames")) c.synth.duration_frames = s["duration_frames"].get<int>();
        if (s.contains("noise_scale")) c.synth.noise_scale = s["noise_scale"].get<double>();
        if (s.contains("seed")) c.synth.seed = s["seed"].get<std::uint64_t>();
    }
    if (j.contains("split")) {
        const json& s = j["split"];
        check_keys(s, "split.", {"train", "val", "test"});
        if (s.contains("train")) c.split.train = s["train"].get<double>();
        if (s.contains("val")) c.split.val = s["val"].get<double>();
        if (s.contains("test")) c.split.test = s["test"].get<double>();
        if (std::abs(c.split.train + c.split.val + c.split.test - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m, "model.",
                   {"kind", "embed_dim", "hidden_dim", "neighborhood_side", "grid", "compressed_dim"});
        if (m.contains("kind")) c.model.kind = model_kind_from_string(m["kind"].get<std::string>());
        if (m.contains("embed_dim")) c.model.embed_dim = m["embed_dim"].get<int>();
        if (m.contains("hidden_dim")) c.model.hidden_dim = m["hidden_dim"].get<int>();
        if (m.contains("neighborhood_side"))
            c.model.pooling.neighborhood_side = m["neighborhood_side"].get<double>();
        if (m.contains("grid")) c.model.pooling.grid = m["grid"].get<int>();
        if (m.contains("compressed_dim")) c.model.pooling.compressed_dim = m["compressed_dim"].get<int>();
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        check_keys(l, "loss.", {"mode", "lambda", "fixed_radius", "overlap_threshold"});
        if (l.contains("mode")) c.loss.mode = loss_mode_from_string(l["mode"].get<std::string>());
        if (l.contains("lambda")) c.loss.lambda = l["lambda"].get<double>();
        if (l.contains("fixed_radius")) c.loss.fixed_radius = l["fixed_radius"].get<double>();
        if (l.contains("overlap_threshold")) c.loss.overlap_threshold = l["overlap_threshold"].get<double>();
        if (c.loss.lambda < 0 || c.loss.fixed_radius <= 0) throw ConfigError("invalid loss config");
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, "train.", {"learning_rate", "batch_size", "max_epochs", "patience", "clip_norm"});
        if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
        if (t.contains("max_epochs")) c.train.max_epochs = t["max_epochs"].get<int>();
        if (t.contains("patience")) c.train.patience = t["patience"].get<int>();
        if (t.contains("clip_norm")) c.train.clip_norm = t["clip_norm"].get<double>();
        if (c.train.learning_rate <= 0 || c.train.batch_size < 1 || c.train.max_epochs < 1 ||
            c.train.patience < 1 || c.train.patience > c.train.max_epochs)
            throw ConfigError("invalid train config");
    }
    return c;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    write_text(out_dir / "config_echo.json", run_config_json(cfg) + "\n");
}

std::vector<Scene> load_split(const std::filesystem::path& data_dir, const std::string& dataset,
                              const std::string& split) {
    return read_scenes(data_dir / dataset / (split + ".jsonl"));
}

std::string metrics_csv(const std::string& dataset, const std::string& split, const ModelConfig& model,
                        const LossConfig& loss, std::uint64_t seed, const MetricsReport& report) {
    std::ostringstream out;
    out << "dataset,split,density_class,model,loss_mode,lambda,seed,ade_m,fde_m,cr_pct,n_scenes,n_trajectories\n";
    auto row = [&](const std::string& cls, const MetricsRow& r) {
        out << dataset << ',' << split << ',' << cls << ',' << to_string(model.kind) << ','
            << to_string(loss.mode) << ',' << fmt(loss.lambda) << ',' << seed << ',' << fmt(r.ade) << ','
            << fmt(r.fde) << ',' << fmt(r.cr_pct) << ',' << r.n_scenes << ',' << r.n_trajectories << '\n';
    };
    row("overall", report.overall);
    for (const auto& [cls, r] : report.per_class) row(to_string(cls), r);
    return out.str();
}

FitResult train_model(const RunConfig& cfg, const std::vector<Scene>& train_scenes,
                      const std::vector<Scene>& val_scenes) {
    ModelConfig mc = cfg.model;
    mc.seed = cfg.seed;
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.loss = cfg.loss;
    return fit(Predictor(mc), train_scenes, val_scenes, tc);
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,val_ade,val_cr\n";
    for (const auto& e : history)
        out << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ',' << fmt(e.val_ade)
            << ',' << fmt(e.val_cr) << '\n';
    return out.str();
}

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const RawDataset data = synthesize_crowd(cfg.synth);
    write_raw_file(data, out_dir / "raw.txt");
    echo_config(cfg, out_dir);
    std::cout << "generated " << data.trajectories.size() << " trajectories, mean density "
              << fmt(measured_mean_density(data)) << " ped/m^2\n";
    return 0;
}

int cmd_prepare(const RunConfig& cfg, const std::filesystem::path& raw_path,
                const std::filesystem::path& out_dir) {
    const RawDataset raw = parse_raw_file(raw_path);
    const DatasetSplits splits = split_dataset(raw, cfg.split, cfg.seed);

    std::map<std::string, std::map<std::string, long>> counts;
    const std::array<std::pair<std::string, const RawDataset*>, 3> split_list{
        {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}};
    for (const auto& [split_name, dataset] : split_list) {
        const std::vector<Scene> scenes = build_scenes(*dataset);
        std::map<DensityClass, std::vector<Scene>> by_class;
        for (const auto& s : scenes) by_class[s.density_class].push_back(s);

        std::filesystem::create_directories(out_dir / "allD");
        write_scenes(scenes, out_dir / "allD" / (split_name + ".jsonl"));
        counts["allD"][split_name] = static_cast<long>(scenes.size());
        for (DensityClass cls :
             {DensityClass::lowD, DensityClass::mediumD, DensityClass::highD, DensityClass::veryHD}) {
            const std::string name = to_string(cls);
            std::filesystem::create_directories(out_dir / name);
            write_scenes(by_class[cls], out_dir / name / (split_name + ".jsonl"));
            counts[name][split_name] = static_cast<long>(by_class[cls].size());
        }
    }

    std::ostringstream csv;
    csv << "dataset,train,val,test,total\n";
    for (const auto& name : kDatasetNames) {
        auto& c = counts[name];
        csv << name << ',' << c["train"] << ',' << c["val"] << ',' << c["test"] << ','
            << c["train"] + c["val"] + c["test"] << '\n';
    }
    write_text(out_dir / "counts.csv", csv.str());
    echo_config(cfg, out_dir);
    std::cout << csv.str();
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::string& dataset,
              const std::filesystem::path& out_dir) {
    const auto train_scenes = load_split(data_dir, dataset, "train");
    const auto val_scenes = load_split(data_dir, dataset, "val");
    const FitResult result = train_model(cfg, train_scenes, val_scenes);
    std::filesystem::create_directories(out_dir);
    result.best.save(out_dir / "checkpoint.json");
    write_text(out_dir / "history.csv", history_csv(result.history));
    echo_config(cfg, out_dir);
    std::cout << "best epoch " << result.best_epoch << ", val loss " << fmt(result.best_val_loss) << '\n';
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
             const std::filesystem::path& data_dir, const std::string& dataset,
             const std::filesystem::path& out_dir) {
    const Predictor model = Predictor::load(checkpoint);
    const auto test_scenes = load_split(data_dir, dataset, "test");
    const MetricsReport report = evaluate(model, test_scenes);
    std::filesystem::create_directories(out_dir);
    const std::string csv = metrics_csv(dataset, "test", model.config(), cfg.loss, cfg.seed, report);
    write_text(out_dir / "metrics.csv", csv);
    echo_config(cfg, out_dir);
    char line[160];
    std::snprintf(line, sizeof(line), "%s test: ADE %.3f m, FDE %.3f m, CR %.1f%%\n", dataset.c_str(),
                  report.overall.ade, report.overall.fde, report.overall.cr_pct);
    std::cout << line;
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::string& dataset,
              const std::vector<double>& lambdas, const std::filesystem::path& out_dir) {
    if (lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
    const auto train_scenes = load_split(data_dir, dataset, "train");
    const auto val_scenes = load_split(data_dir, dataset, "val");
    const auto test_scenes = load_split(data_dir, dataset, "test");

    std::ostringstream csv;
    csv << "dataset,lambda,seed,ade_m,fde_m,cr_pct,best_epoch\n";
    for (size_t i = 0; i < lambdas.size(); ++i) {
        RunConfig point = cfg;
        point.seed = cfg.seed + i;
        point.loss.lambda = lambdas[i];
        const FitResult result = train_model(point, train_scenes, val_scenes);
        const MetricsReport report = evaluate(result.best, test_scenes);
        csv << dataset << ',' << fmt(lambdas[i]) << ',' << point.seed << ',' << fmt(report.overall.ade)
            << ',' << fmt(report.overall.fde) << ',' << fmt(report.overall.cr_pct) << ','
            << result.best_epoch << '\n';
    }
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "sweep.csv", csv.str());
    echo_config(cfg, out_dir);
    std::cout << csv.str();
    return 0;
}

int cmd_radius_report(const RunConfig& cfg, const std::filesystem::path& data_dir,
                      const std::filesystem::path& out_dir) {
    std::vector<Scene> scenes;
    for (const char* split : {"train", "val", "test"}) {
        auto part = load_split(data_dir, "allD", split);
        scenes.insert(scenes.end(), part.begin(), part.end());
    }

    struct Stats {
        long windows = 0;
        long estimated = 0;
        double sum = 0.0, lo = 0.0, hi = 0.0;
    };
    std::map<DensityClass, Stats> stats;
    for (DensityClass cls :
         {DensityClass::lowD, DensityClass::mediumD, DensityClass::highD, DensityClass::veryHD})
        stats[cls];
    for (const auto& scene : scenes) {
        auto& s = stats[scene.density_class];
        s.windows++;
        const RadiusEstimate est =
            window_average_radius(scene, cfg.loss.overlap_threshold, cfg.loss.fixed_radius);
        if (est.estimated) {
            if (s.estimated == 0) {
                s.lo = s.hi = est.average;
            } else {
                s.lo = std::min(s.lo, est.average);
                s.hi = std::max(s.hi, est.average);
            }
            s.estimated++;
            s.sum += est.average;
        }
    }

    std::ostringstream csv;
    csv << "density_class,n_windows,estimated_fraction,mean_rbar,min_rbar,max_rbar\n";
    for (const auto& [cls, s] : stats) {
        const double frac = s.windows > 0 ? static_cast<double>(s.estimated) / s.windows : 0.0;
        const double mean = s.estimated > 0 ? s.sum / s.estimated : 0.0;
        csv << to_string(cls) << ',' << s.windows << ',' << fmt(frac) << ',' << fmt(mean) << ','
            << fmt(s.lo) << ',' << fmt(s.hi) << '\n';
    }
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "radius_report.csv", csv.str());
    echo_config(cfg, out_dir);
    std::cout << csv.str();
    return 0;
}

}  // namespace

RunConfig load_run_config(const std::optional<std::filesystem::path>& path) {
    if (!path) return RunConfig{};
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config: " + path->string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    return config_from_json(j);
}

namespace {

void patch_assignment(json& patch, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos) throw ConfigError("override must be section.key=value: " + assignment);
    const std::string value = assignment.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings (e.g. loss modes)
    }
    if (dot != std::string::npos && dot < eq) {
        const std::string section = assignment.substr(0, dot);
        const std::string key = assignment.substr(dot + 1, eq - dot - 1);
        if (!patch.contains(section) || !patch[section].contains(key))
            throw ConfigError("unknown config key: " + section + "." + key);
        patch[section][key] = parsed;
    } else {
        const std::string key = assignment.substr(0, eq);
        if (!patch.contains(key) || patch[key].is_object())
            throw ConfigError("unknown config key: " + key);
        patch[key] = parsed;
    }
}

// Applies all overrides first, then validates the combined result once, so
// interdependent keys (e.g. max_epochs and patience) can change together.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments) {
    json patch = config_to_json(cfg);
    for (const auto& a : assignments) patch_assignment(patch, a);
    return config_from_json(patch);
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& assignment) {
    cfg = apply_overrides(cfg, {assignment});
}

std::string run_config_json(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"crowdcast: collision-aware pedestrian trajectory prediction"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", dataset = "allD", raw_path, checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;
    std::optional<std::string> loss_mode, model_kind;
    std::vector<std::string> overrides;
    std::vector<double> lambdas;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", overrides, "override config key: section.key=value")->take_all();

    auto* gen = app.add_subcommand("generate", "synthesize a raw trajectory file");
    auto* prep = app.add_subcommand("prepare", "split, slice, and classify raw trajectories");
    prep->add_option("--raw", raw_path, "raw trajectory file")->required();
    auto* train_cmd = app.add_subcommand("train", "train a predictor");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    auto* sweep_cmd = app.add_subcommand("sweep", "train one model per lambda");
    sweep_cmd->add_option("--lambdas", lambdas, "collision weights to sweep")->required();
    auto* radius_cmd = app.add_subcommand("radius-report", "R-bar statistics per density class");

    std::string data_dir;
    for (CLI::App* cmd : {train_cmd, eval_cmd, sweep_cmd, radius_cmd})
        cmd->add_option("--data", data_dir, "prepared dataset directory")->required();
    for (CLI::App* cmd : {train_cmd, eval_cmd, sweep_cmd}) {
        cmd->add_option("--dataset", dataset, "dataset name")
            ->check(CLI::IsMember(kDatasetNames));
        cmd->add_option("--lambda", lambda, "collision weight");
        cmd->add_option("--loss", loss_mode, "loss mode")->check(CLI::IsMember({"ade", "dos", "sos"}));
        cmd->add_option("--model", model_kind, "model kind")->check(CLI::IsMember({"vanilla", "social"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = load_run_config(
            config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path));
        cfg = apply_overrides(cfg, overrides);
        if (seed) {
            cfg.seed = *seed;
            cfg.synth.seed = *seed;
        }
        if (lambda) cfg.loss.lambda = *lambda;
        if (loss_mode) cfg.loss.mode = loss_mode_from_string(*loss_mode);
        if (model_kind) cfg.model.kind = model_kind_from_string(*model_kind);

        if (gen->parsed()) return cmd_generate(cfg, out_dir);
        if (prep->parsed()) return cmd_prepare(cfg, raw_path, out_dir);
        if (train_cmd->parsed()) return cmd_train(cfg, data_dir, dataset, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint, data_dir, dataset, out_dir);
        if (sweep_cmd->parsed()) return cmd_sweep(cfg, data_dir, dataset, lambdas, out_dir);
        if (radius_cmd->parsed()) return cmd_radius_report(cfg, data_dir, out_dir);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace crowdcast
