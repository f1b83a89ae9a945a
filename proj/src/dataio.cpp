#include "crowdcast/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "crowdcast/errors.hpp"

namespace crowdcast {

using nlohmann::json;

std::string to_string(FlowPattern p) {
    switch (p) {
        case FlowPattern::unidirectional: return "unidirectional";
        case FlowPattern::bidirectional: return "bidirectional";
        case FlowPattern::crossing: return "crossing";
    }
    return "bidirectional";
}

FlowPattern flow_pattern_from_string(const std::string& s) {
    if (s == "unidirectional") return FlowPattern::unidirectional;
    if (s == "bidirectional") return FlowPattern::bidirectional;
    if (s == "crossing") return FlowPattern::crossing;
    throw ConfigError("unknown flow pattern: " + s);
}

namespace {

struct RawRow {
    long frame;
    Position pos;
    long line;
};

std::string format_double(double x) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, end);
}

}  // namespace

RawDataset parse_raw_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open raw file: " + path.string());

    std::map<int, std::vector<RawRow>> rows_by_id;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        long frame;
        int id;
        double x, y;
        std::string extra;
        if (!(ss >> frame >> id >> x >> y)) throw ParseError(line_no, "expected `frame agent_id x y`");
        if (ss >> extra) throw ParseError(line_no, "trailing tokens after `frame agent_id x y`");
        if (frame < 0) throw ParseError(line_no, "negative frame");
        if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError(line_no, "non-finite coordinate");
        rows_by_id[id].push_back({frame, {x, y}, line_no});
    }
    if (rows_by_id.empty()) throw EmptyFile("no valid rows in " + path.string());

    int max_id = rows_by_id.rbegin()->first;
    RawDataset data;
    std::vector<RawTrajectory> tails;  // gap-split pieces, ids assigned afterwards
    for (auto& [id, rows] : rows_by_id) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RawRow& a, const RawRow& b) { return a.frame < b.frame; });
        RawTrajectory cur{id, rows.front().frame, {rows.front().pos}};
        bool first_piece = true;
        for (size_t i = 1; i < rows.size(); ++i) {
            const long prev = rows[i - 1].frame;
            if (rows[i].frame == prev)
                throw ParseError(rows[i].line, "duplicate frame for agent " + std::to_string(id));
            if (rows[i].frame != prev + 1) {
                (first_piece ? data.trajectories : tails).push_back(std::move(cur));
                first_piece = false;
                cur = RawTrajectory{id, rows[i].frame, {}};
            }
            cur.positions.push_back(rows[i].pos);
        }
        (first_piece ? data.trajectories : tails).push_back(std::move(cur));
    }
    for (auto& t : tails) {
        t.agent_id = ++max_id;
        data.trajectories.push_back(std::move(t));
    }
    return data;
}

void write_raw_file(const RawDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write raw file: " + path.string());
    out << "# frame agent_id x y\n";
    for (const auto& t : data.trajectories) {
        for (int i = 0; i < t.steps(); ++i) {
            out << (t.start_frame + i) << ' ' << t.agent_id << ' '
                << format_double(t.positions[i].x) << ' ' << format_double(t.positions[i].y) << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

namespace {

constexpr int kSceneSchemaVersion = 1;

json position_list(const std::vector<Position>& xy) {
    json arr = json::array();
    for (const auto& p : xy) arr.push_back(json::array({p.x, p.y}));
    return arr;
}

std::vector<Position> parse_position_list(const json& arr, long line_no) {
    if (!arr.is_array()) throw SchemaError("line " + std::to_string(line_no) + ": xy must be an array");
    std::vector<Position> out;
    out.reserve(arr.size());
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2)
            throw SchemaError("line " + std::to_string(line_no) + ": position must be [x, y]");
        out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return out;
}

}  // namespace

void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write scene file: " + path.string());
    out << json{{"schema_version", kSceneSchemaVersion}}.dump() << '\n';
    for (const auto& s : scenes) {
        json agents = json::array();
        for (const auto& a : s.agents) {
            agents.push_back({{"id", a.id},
                              {"xy", position_list({a.positions.begin(), a.positions.end()})}});
        }
        json line{{"schema_version", kSceneSchemaVersion},
                  {"scene_id", s.scene_id},
                  {"density_class", to_string(s.density_class)},
                  {"avg_density", s.avg_density},
                  {"start_frame", s.start_frame},
                  {"agents", agents},
                  {"primary_id", s.primary_id}};
        if (!s.context_agents.empty()) {
            json ctx = json::array();
            for (const auto& c : s.context_agents)
                ctx.push_back({{"id", c.id}, {"first_step", c.first_step}, {"xy", position_list(c.positions)}});
            line["context_agents"] = std::move(ctx);
        }
        out << line.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Scene> read_scenes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scene file: " + path.string());
    std::string line;
    long line_no = 0;
    std::vector<Scene> scenes;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
            j["schema_version"].get<int>() != kSceneSchemaVersion)
            throw SchemaError("line " + std::to_string(line_no) + ": unsupported schema version");
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        try {
            Scene s;
            s.scene_id = j.at("scene_id").get<long>();
            s.primary_id = j.at("primary_id").get<int>();
            s.start_frame = j.at("start_frame").get<long>();
            s.avg_density = j.at("avg_density").get<double>();
            s.density_class = density_class_from_string(j.at("density_class").get<std::string>());
            for (const auto& a : j.at("agents")) {
                SceneAgent agent;
                agent.id = a.at("id").get<int>();
                const auto xy = parse_position_list(a.at("xy"), line_no);
                if (xy.size() != kWindowLength)
                    throw SchemaError("line " + std::to_string(line_no) + ": agent needs exactly " +
                                      std::to_string(kWindowLength) + " positions");
                std::copy(xy.begin(), xy.end(), agent.positions.begin());
                s.agents.push_back(std::move(agent));
            }
            if (j.contains("context_agents")) {
                for (const auto& c : j["context_agents"]) {
                    ContextAgent ctx;
                    ctx.id = c.at("id").get<int>();
                    ctx.first_step = c.at("first_step").get<int>();
                    ctx.positions = parse_position_list(c.at("xy"), line_no);
                    s.context_agents.push_back(std::move(ctx));
                }
            }
            scenes.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header_seen) throw SchemaError("missing schema header line in " + path.string());
    return scenes;
}

namespace {

struct SimAgent {
    int id;
    Position pos;
    Position goal;
    double speed;
    long spawn_frame;
    std::vector<Position> recorded;
};

double clamp(double x, double lo, double hi) { return std::max(lo, std::min(hi, x)); }

}  // namespace

RawDataset synthesize_crowd(const SynthConfig& cfg) {
    const double area = cfg.arena_width * cfg.arena_height;
    if (cfg.density_lo < 0.1 || cfg.density_hi > 3.0 || cfg.density_lo > cfg.density_hi)
        throw ConfigError("density band must lie within [0.1, 3.0]");
    if (cfg.arena_width < 2.0 || cfg.arena_height < 2.0)
        throw ConfigError("arena must be at least 2 m on each side");
    if (cfg.duration_frames <= 0 || cfg.noise_scale < 0)
        throw ConfigError("duration and noise scale must be positive");
    const double mid_density = 0.5 * (cfg.density_lo + cfg.density_hi);
    if (mid_density * area < 1.0) throw ConfigError("density band infeasible for this arena: fewer than one agent");
    if (mid_density * area > 400.0) throw ConfigError("density band infeasible for this arena: too many agents");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> speed_dist(0.6, 0.08);
    std::normal_distribution<double> noise(0.0, cfg.noise_scale);

    const double dt = 1.0 / kFrameRate;
    const double w = cfg.arena_width, h = cfg.arena_height;

    std::vector<SimAgent> active;
    RawDataset data;
    int next_id = 1;
    int spawn_toggle = 0;

    auto spawn = [&](long frame) {
        SimAgent a;
        a.id = next_id++;
        a.speed = clamp(speed_dist(rng), 0.3, 1.0);
        a.spawn_frame = frame;
        int dir;  // 0:+x 1:-x 2:+y 3:-y
        switch (cfg.flow) {
            case FlowPattern::unidirectional: dir = 0; break;
            case FlowPattern::bidirectional: dir = spawn_toggle++ % 2; break;
            case FlowPattern::crossing:
            default: dir = spawn_toggle++ % 4; break;
        }
        const double margin = 0.3;
        const double lx = margin + unit(rng) * (w - 2 * margin);
        const double ly = margin + unit(rng) * (h - 2 * margin);
        switch (dir) {
            case 0: a.pos = {0.0, ly}; a.goal = {w, clamp(ly + noise(rng), 0.0, h)}; break;
            case 1: a.pos = {w, ly}; a.goal = {0.0, clamp(ly + noise(rng), 0.0, h)}; break;
            case 2: a.pos = {lx, 0.0}; a.goal = {clamp(lx + noise(rng), 0.0, w), h}; break;
            default: a.pos = {lx, h}; a.goal = {clamp(lx + noise(rng), 0.0, w), 0.0}; break;
        }
        a.recorded.push_back(a.pos);
        active.push_back(std::move(a));
    };

    auto finish = [&](SimAgent& a) {
        data.trajectories.push_back({a.id, a.spawn_frame, std::move(a.recorded)});
    };

    auto density_estimate = [&]() {
        const size_t n = active.size();
        if (n == 0) return 0.0;
        if (n < 8) return static_cast<double>(n) / (0.6 * area);  // hull unreliable at small counts
        FrameSnapshot snap;
        for (const auto& a : active) snap.agents.emplace_back(a.id, a.pos);
        return snapshot_density(snap);
    };

    for (long frame = 0; frame < cfg.duration_frames; ++frame) {
        const double phase = cfg.duration_frames > 1
                                 ? static_cast<double>(frame) / (cfg.duration_frames - 1)
                                 : 0.5;
        const double target = cfg.density_lo + (cfg.density_hi - cfg.density_lo) * phase;
        for (int k = 0; k < 3 && density_estimate() < target; ++k) spawn(frame);

        // Step every active agent: goal attraction + circular repulsion + noise.
        std::vector<Position> next(active.size());
        for (size_t i = 0; i < active.size(); ++i) {
            const SimAgent& a = active[i];
            double gx = a.goal.x - a.pos.x, gy = a.goal.y - a.pos.y;
            const double gd = std::max(std::hypot(gx, gy), 1e-9);
            double vx = a.speed * gx / gd, vy = a.speed * gy / gd;
            double rx = 0.0, ry = 0.0;
            for (size_t j = 0; j < active.size(); ++j) {
                if (j == i) continue;
                const double dx = a.pos.x - active[j].pos.x;
                const double dy = a.pos.y - active[j].pos.y;
                const double d = std::hypot(dx, dy);
                if (d < 0.7 && d > 1e-9) {
                    const double push = 1.2 * (0.7 - d) / 0.7;
                    rx += push * dx / d;
                    ry += push * dy / d;
                }
            }
            const double rmag = std::hypot(rx, ry);
            const double rcap = 0.9 * a.speed;
            if (rmag > rcap) {
                rx *= rcap / rmag;
                ry *= rcap / rmag;
            }
            next[i] = {clamp(a.pos.x + (vx + rx) * dt + noise(rng) * dt, 0.0, w),
                       clamp(a.pos.y + (vy + ry) * dt + noise(rng) * dt, 0.0, h)};
        }

        std::vector<SimAgent> still_active;
        still_active.reserve(active.size());
        for (size_t i = 0; i < active.size(); ++i) {
            active[i].pos = next[i];
            active[i].recorded.push_back(next[i]);
            const double goal_dist = euclidean_distance(next[i], active[i].goal);
            if (goal_dist < 0.2)
                finish(active[i]);
            else
                still_active.push_back(std::move(active[i]));
        }
        active = std::move(still_active);
    }
    for (auto& a : active) finish(a);
    std::sort(data.trajectories.begin(), data.trajectories.end(),
              [](const RawTrajectory& a, const RawTrajectory& b) { return a.agent_id < b.agent_id; });
    return data;
}

double measured_mean_density(const RawDataset& data) {
    std::map<long, FrameSnapshot> frames;
    for (const auto& t : data.trajectories) {
        for (int i = 0; i < t.steps(); ++i) {
            auto& snap = frames[t.start_frame + i];
            snap.frame = t.start_frame + i;
            snap.agents.emplace_back(t.agent_id, t.positions[i]);
        }
    }
    if (frames.empty()) throw EmptyDataset("no frames in dataset");
    double total = 0.0;
    for (const auto& [frame, snap] : frames) total += snapshot_density(snap);
    return total / static_cast<double>(frames.size());
}

}  // namespace crowdcast
