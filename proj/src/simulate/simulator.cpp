#include "playertrack/simulate/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/core/io.hpp"

namespace playertrack::sim {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, players_per_team, teams, distractors, frames, fps,
                                                field_width, field_height, box_height_min, box_height_max,
                                                box_aspect, speed_min, speed_max, occlusion_rate, occlusion_iou,
                                                occlusion_mixing, exit_rate, reentry_min, reentry_max,
                                                embedding_dim, identity_correlation, embedding_noise,
                                                drop_probability, box_jitter, confidence_noise, seed)

void SimConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("simulation config: ") + what);
    };
    require(players_per_team >= 1 && teams >= 1 && distractors >= 0, "need at least one player");
    require(frames >= 1 && fps > 0.0, "frames and fps must be positive");
    require(box_height_min > 0.0 && box_height_max >= box_height_min && box_aspect > 0.0, "bad box size");
    require(field_height > 2.0 * box_height_max && field_width > 2.0 * box_aspect * box_height_max,
            "field too small for the boxes");
    require(speed_min >= 0.0 && speed_max >= speed_min, "bad speed range");
    require(occlusion_rate >= 0.0 && occlusion_rate <= 1.0, "occlusion_rate must be in [0, 1]");
    require(field_width / people() > box_aspect * box_height_max || occlusion_rate > 0.0,
            "field too narrow for occlusion-free lanes");
    require(occlusion_iou > 0.0 && occlusion_iou <= 1.0, "occlusion_iou must be in (0, 1]");
    require(occlusion_mixing >= 0.0, "occlusion_mixing must be >= 0");
    require(exit_rate >= 0.0 && exit_rate < 1.0, "exit_rate must be in [0, 1)");
    require(reentry_min >= 1 && reentry_max >= reentry_min, "bad re-entry range");
    require(embedding_dim >= 1, "embedding_dim must be >= 1");
    require(identity_correlation >= 0.0 && identity_correlation < 1.0, "identity_correlation must be in [0, 1)");
    require(embedding_noise >= 0.0 && box_jitter >= 0.0 && confidence_noise >= 0.0, "noise must be >= 0");
    require(drop_probability >= 0.0 && drop_probability < 1.0, "drop_probability must be in [0, 1)");
}

nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json j = c;
    j["v"] = io::kSchemaVersion;
    return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
    if (j.value("v", io::kSchemaVersion) != io::kSchemaVersion)
        throw FormatError("unsupported simulation config version");
    SimConfig c = j.get<SimConfig>();
    c.validate();
    return c;
}

namespace {

struct Person {
    int identity = 0;
    bool on_field = false;
    int back_at = 0;
    double x = 0, y = 0;  // box centre x, box bottom y
    double vx = 0, vy = 0;
    double tx = 0, ty = 0, speed = 0;
    double x_lo = 0, x_hi = 0;
};

class Generator {
public:
    explicit Generator(const SimConfig& c) : c_(c), rng_(c.seed) {}

    SimulatedGame run() {
        place_people();
        make_means();
        SimulatedGame game;
        std::vector<int> run_start(people_.size(), -1), last_seen(people_.size(), -2);
        std::vector<float> data;

        for (int f = 0; f < c_.frames; ++f) {
            for (auto& p : people_) step(p, f);

            std::vector<std::size_t> present;
            std::vector<BoundingBox> boxes(people_.size());
            for (std::size_t i = 0; i < people_.size(); ++i) {
                if (!people_[i].on_field) continue;
                present.push_back(i);
                boxes[i] = box_of(people_[i]);
                game.ground_truth.push_back({f, people_[i].identity, boxes[i]});
            }

            std::vector<bool> hidden(people_.size(), false);
            for (std::size_t a = 0; a < present.size(); ++a) {
                for (std::size_t b = a + 1; b < present.size(); ++b) {
                    const auto i = present[a], j = present[b];
                    if (iou(boxes[i], boxes[j]) < c_.occlusion_iou) continue;
                    hidden[farther(i, j)] = true;
                }
            }

            for (auto i : present) {
                const bool dropped = uniform_(rng_) < c_.drop_probability;
                if (hidden[i] || dropped) continue;
                const std::size_t row = game.detections.size();
                game.detections.push_back({f, jitter(boxes[i]), confidence(), row});
                game.detection_identity.push_back(people_[i].identity);
                append_embedding(i, present, boxes, data);

                if (last_seen[i] != f - 1) {
                    if (run_start[i] >= 0) game.segments.push_back({people_[i].identity, run_start[i], last_seen[i]});
                    run_start[i] = f;
                }
                last_seen[i] = f;
            }
        }
        for (std::size_t i = 0; i < people_.size(); ++i) {
            if (run_start[i] >= 0) game.segments.push_back({people_[i].identity, run_start[i], last_seen[i]});
        }
        std::sort(game.segments.begin(), game.segments.end(), [](const Segment& a, const Segment& b) {
            return std::tie(a.first_frame, a.identity) < std::tie(b.first_frame, b.identity);
        });
        game.embeddings = EmbeddingMatrix(game.detections.size(), c_.embedding_dim, std::move(data));
        return game;
    }

private:
    double height_at(double bottom) const {
        return c_.box_height_min + (c_.box_height_max - c_.box_height_min) * (bottom / c_.field_height);
    }

    BoundingBox box_of(const Person& p) const {
        const double h = height_at(p.y);
        const double w = c_.box_aspect * h;
        return {p.x - w / 2.0, p.y - h, w, h};
    }

    // Larger bottom coordinate means closer to the camera.
    std::size_t farther(std::size_t i, std::size_t j) const {
        if (people_[i].y != people_[j].y) return people_[i].y < people_[j].y ? i : j;
        return std::max(i, j);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(rng_); }

    void place_people() {
        const int n = c_.people();
        std::vector<int> lanes(static_cast<std::size_t>(n));
        std::iota(lanes.begin(), lanes.end(), 0);
        std::shuffle(lanes.begin(), lanes.end(), rng_);
        const double half_w = c_.box_aspect * c_.box_height_max / 2.0;
        const double lane = c_.field_width / n;
        const double spread = c_.occlusion_rate * c_.field_width;
        for (int k = 0; k < n; ++k) {
            Person p;
            p.identity = k + 1;
            const double lane_lo = lanes[static_cast<std::size_t>(k)] * lane + half_w;
            const double lane_hi = (lanes[static_cast<std::size_t>(k)] + 1) * lane - half_w;
            p.x_lo = std::max(half_w, std::min(lane_lo, lane_hi) - spread);
            p.x_hi = std::min(c_.field_width - half_w, std::max(lane_lo, lane_hi) + spread);
            people_.push_back(p);
            enter(people_.back());
        }
    }

    void make_means() {
        const auto d = c_.embedding_dim;
        auto random_unit = [&] {
            std::vector<double> v(d);
            double norm = 0.0;
            for (auto& x : v) {
                x = normal_(rng_);
                norm += x * x;
            }
            for (auto& x : v) x /= std::sqrt(norm);
            return v;
        };
        std::vector<std::vector<double>> groups;
        for (int t = 0; t <= c_.teams; ++t) groups.push_back(random_unit());
        const double shared = std::sqrt(c_.identity_correlation);
        const double own = std::sqrt(1.0 - c_.identity_correlation);
        for (const auto& p : people_) {
            const int group = std::min((p.identity - 1) / c_.players_per_team, c_.teams);
            auto u = random_unit();
            double norm = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                u[k] = shared * groups[static_cast<std::size_t>(group)][k] + own * u[k];
                norm += u[k] * u[k];
            }
            for (auto& x : u) x /= std::sqrt(norm);
            means_.push_back(std::move(u));
        }
    }

    void new_target(Person& p) {
        p.tx = uniform(p.x_lo, p.x_hi);
        p.ty = uniform(c_.box_height_max, c_.field_height);
        p.speed = uniform(c_.speed_min, c_.speed_max);
    }

    void enter(Person& p) {
        p.on_field = true;
        p.x = uniform(p.x_lo, p.x_hi);
        p.y = uniform(c_.box_height_max, c_.field_height);
        p.vx = p.vy = 0.0;
        new_target(p);
    }

    void step(Person& p, int frame) {
        if (!p.on_field) {
            if (frame >= p.back_at) enter(p);
            return;
        }
        if (frame > 0 && uniform_(rng_) < c_.exit_rate) {
            p.on_field = false;
            p.back_at = frame + static_cast<int>(std::floor(uniform(c_.reentry_min, c_.reentry_max + 1.0)));
            return;
        }
        const double dx = p.tx - p.x, dy = p.ty - p.y;
        const double dist = std::hypot(dx, dy);
        if (dist <= std::max(p.speed, 1.0)) {
            new_target(p);
            return;
        }
        // Velocity relaxes toward the waypoint direction for smooth turns.
        p.vx += 0.2 * (p.speed * dx / dist - p.vx);
        p.vy += 0.2 * (p.speed * dy / dist - p.vy);
        p.x = std::clamp(p.x + p.vx, p.x_lo, p.x_hi);
        p.y = std::clamp(p.y + p.vy, c_.box_height_max, c_.field_height);
    }

    BoundingBox jitter(const BoundingBox& b) {
        const double s = c_.box_jitter;
        double w = std::max(1.0, b.width + s * normal_(rng_));
        double h = std::max(1.0, b.height + s * normal_(rng_));
        w = std::min(w, c_.field_width);
        h = std::min(h, c_.field_height);
        const double cx = b.center_x() + s * normal_(rng_);
        const double cy = b.center_y() + s * normal_(rng_);
        const double left = std::clamp(cx - w / 2.0, 0.0, c_.field_width - w);
        const double top = std::clamp(cy - h / 2.0, 0.0, c_.field_height - h);
        return {left, top, w, h};
    }

    double confidence() { return std::clamp(0.9 + c_.confidence_noise * normal_(rng_), 0.01, 1.0); }

    // Identity mean plus isotropic noise, contaminated by nearer people whose
    // boxes overlap this one.
    void append_embedding(std::size_t i, const std::vector<std::size_t>& present,
                          const std::vector<BoundingBox>& boxes, std::vector<float>& out) {
        const auto d = c_.embedding_dim;
        std::vector<double> v(means_[i]);
        const double scale = c_.embedding_noise / std::sqrt(static_cast<double>(d));
        for (auto& x : v) x += scale * normal_(rng_);
        for (auto j : present) {
            if (j == i || farther(i, j) != i) continue;
            const double overlap = iou(boxes[i], boxes[j]);
            if (overlap <= 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) v[k] += c_.occlusion_mixing * overlap * means_[j][k];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double x : v) out.push_back(static_cast<float>(x / norm));
    }

    const SimConfig& c_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::vector<Person> people_;
    std::vector<std::vector<double>> means_;
};

}  // namespace

SimulatedGame simulate(const SimConfig& config) {
    config.validate();
    return Generator(config).run();
}

ProjectConfig project_config_for(const SimConfig& config) {
    ProjectConfig p;
    p.n_players = config.players_per_team;
    p.fps = config.fps;
    p.d1 = static_cast<int>(config.embedding_dim);
    return p;
}

void write_project(const std::filesystem::path& dir, const SimulatedGame& game, const ProjectConfig& project,
                   const SimConfig& config) {
    std::filesystem::create_directories(dir);
    io::save_config(dir / "config.json", project);
    io::save_detections(dir / "detections.csv", game.detections);
    io::save_embeddings(dir / "embeddings.bin", game.embeddings);
    io::save_ground_truth(dir / "gt.csv", game.ground_truth);
    io::write_json(dir / "simulation.json", to_json(config));
}

}  // namespace playertrack::sim
