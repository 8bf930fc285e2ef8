#include "mxflow/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mxflow/quantize.hpp"
#include "mxflow/text_util.hpp"

namespace mxflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void search_error(const std::string& what) {
    throw std::invalid_argument("search: " + what);
}

}  // namespace

std::string_view algo_name(SearchAlgo a) {
    switch (a) {
        case SearchAlgo::Random: return "random";
        case SearchAlgo::Tpe: return "tpe";
        case SearchAlgo::Qmc: return "qmc";
        case SearchAlgo::Nsga2: return "nsga2";
    }
    return "<unknown>";
}

std::optional<SearchAlgo> algo_from_name(std::string_view name) {
    if (name == "random") return SearchAlgo::Random;
    if (name == "tpe") return SearchAlgo::Tpe;
    if (name == "qmc") return SearchAlgo::Qmc;
    if (name == "nsga2") return SearchAlgo::Nsga2;
    return std::nullopt;
}

double objective(const TrialMetrics& m, const ObjectiveWeights& w) {
    if (m.avg_bitwidth <= 0) search_error("objective requires avg_bitwidth > 0");
    double score = m.accuracy + w.k / m.avg_bitwidth;
    if (w.mode == ObjectiveMode::HardwareAware) {
        score += w.k1 * m.throughput;
        if (m.area <= 0) search_error("objective requires area > 0");
        score += w.k2 / m.area;
    }
    return score;
}

ObjectiveWeights calibrate_weights(ObjectiveWeights w, const Graph& g,
                                   const ResourceBudget& budget, const CostTable& tbl) {
    if (w.mode == ObjectiveMode::SoftwareOnly) {
        w.k1 = 0;
        w.k2 = 0;
        return w;
    }
    if (!std::isnan(w.k1) && !std::isnan(w.k2)) return w;
    Graph p = insert_buffers(parallelize(g, budget, tbl));
    auto est = estimate_graph(p, tbl, &budget);
    if (std::isnan(w.k1)) w.k1 = est.throughput > 0 ? 0.1 / est.throughput : 0.0;
    if (std::isnan(w.k2)) w.k2 = 0.1 * est.total_area;
    return w;
}

std::string SearchDimension::name() const {
    switch (target) {
        case Target::MantissaBits: return "m:" + value;
        case Target::BlockRows: return "rows:" + value;
        case Target::BlockCols: return "cols:" + value;
        case Target::ExpBits: return "e:" + value;
        case Target::TileStep: return "tile:" + value;
    }
    return value;
}

SearchSpace build_space(const Graph& g, const ProfileStats& stats, SpaceMode mode,
                        bool include_hw, const SpaceOptions& opts) {
    if (include_hw && mode != SpaceMode::Reduced)
        search_error("hardware dimensions require the reduced space");

    SearchSpace space;
    space.mode = mode;

    auto dynamic_range_bits = [&](const std::string& name, const ValueInfo& info) -> double {
        double max_abs = 0, variance = 0;
        auto it = stats.per_value.find(name);
        if (it != stats.per_value.end()) {
            max_abs = it->second.max_abs;
            variance = it->second.variance;
        } else if (info.data) {
            // Parameters are static; derive their spread directly.
            double mean = 0;
            for (double v : info.data->data) mean += v;
            mean /= static_cast<double>(info.data->numel());
            for (double v : info.data->data) {
                max_abs = std::max(max_abs, std::fabs(v));
                variance += (v - mean) * (v - mean);
            }
            variance /= static_cast<double>(info.data->numel());
        }
        if (max_abs <= 0 || variance <= 0) return 0;
        return std::log2(max_abs) - 0.5 * std::log2(variance);
    };

    const std::vector<std::int64_t> full_m{2, 3, 4, 5, 6, 7, 8};
    const std::vector<std::int64_t> floored_m{4, 5, 6, 7, 8};
    for (const auto& [name, info] : g.values) {
        const bool floored = dynamic_range_bits(name, info) > opts.range_threshold_bits;
        if (mode == SpaceMode::Full) {
            space.dims.push_back({SearchDimension::Target::BlockRows, name, {1, 2, 4, 8, 16}});
            space.dims.push_back({SearchDimension::Target::BlockCols, name, {1, 2, 4}});
            space.dims.push_back({SearchDimension::Target::ExpBits, name, {4, 5, 6, 7, 8}});
        }
        space.dims.push_back(
            {SearchDimension::Target::MantissaBits, name, floored ? floored_m : full_m});
    }
    if (include_hw) {
        for (const auto& op : g.ops) {
            ValueInfo probe = g.value(op.results.front());
            probe.format = FormatSpec::mxint({16, 2}, 8, 7);  // reduced-space geometry
            const auto lattice = tile_lattice(probe);
            std::vector<std::int64_t> steps(lattice.size());
            for (std::size_t i = 0; i < steps.size(); ++i)
                steps[i] = static_cast<std::int64_t>(i);
            space.dims.push_back(
                {SearchDimension::Target::TileStep, op.results.front(), std::move(steps)});
        }
    }
    return space;
}

QuantConfig config_from_point(const SearchSpace& space, const std::vector<std::size_t>& point) {
    if (point.size() != space.dims.size()) search_error("point arity does not match the space");

    struct FullPick {
        std::int64_t rows = 16, cols = 2, e = 8, m = 7;
    };
    std::map<std::string, FullPick> picks;
    QuantConfig cfg;
    std::map<std::string, std::int64_t> tile_steps;

    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const auto& dim = space.dims[d];
        if (point[d] >= dim.candidates.size())
            search_error("point coordinate outside the candidate set for " + dim.name());
        const std::int64_t v = dim.candidates[point[d]];
        switch (dim.target) {
            case SearchDimension::Target::MantissaBits: picks[dim.value].m = v; break;
            case SearchDimension::Target::BlockRows: picks[dim.value].rows = v; break;
            case SearchDimension::Target::BlockCols: picks[dim.value].cols = v; break;
            case SearchDimension::Target::ExpBits: picks[dim.value].e = v; break;
            case SearchDimension::Target::TileStep: tile_steps[dim.value] = v; break;
        }
    }
    for (const auto& [name, p] : picks) {
        if (space.mode == SpaceMode::Reduced)
            cfg.formats.emplace(name, FormatSpec::mxint({16, 2}, 8, static_cast<int>(p.m)));
        else
            cfg.formats.emplace(name, FormatSpec::mxint({p.rows, p.cols}, static_cast<int>(p.e),
                                                        static_cast<int>(p.m)));
    }
    for (const auto& [name, step] : tile_steps) {
        ValueInfo probe;
        probe.format = FormatSpec::mxint({16, 2}, 8, 7);
        // Tile lattices are geometry-only; shape comes from the value at
        // evaluation time. Store the step for resolution there.
        cfg.tiles[name] = {-1, step};  // resolved by evaluate_trial
    }
    return cfg;
}

namespace {

// Resolve TileStep placeholders ({-1, step}) against each value's
// actual lattice.
QuantConfig resolve_tiles(const Graph& g, QuantConfig cfg) {
    for (auto& [name, tile] : cfg.tiles) {
        if (tile[0] != -1) continue;
        auto lattice = tile_lattice(g.value(name));
        const std::size_t step = std::min<std::size_t>(static_cast<std::size_t>(tile[1]),
                                                       lattice.size() - 1);
        tile = lattice[step];
    }
    return cfg;
}

}  // namespace

Trial evaluate_trial(const Graph& g, const QuantConfig& cfg, const ResourceBudget& budget,
                     const CostTable& tbl, const Dataset& dataset, const ObjectiveWeights& w) {
    Trial t;
    t.config = cfg;

    Graph annotated = annotate(g, QuantConfig{cfg.formats, {}});
    QuantConfig resolved = resolve_tiles(annotated, cfg);
    t.config = resolved;

    Graph designed;
    if (!resolved.tiles.empty()) {
        designed = annotate(annotated, QuantConfig{{}, resolved.tiles});
        for (auto& [name, info] : designed.values)
            if (!info.tile) info.tile = {{1, 1}};
        designed = insert_buffers(designed);
        auto est = estimate_graph(designed, tbl, &budget);
        if (est.total_area > budget.area_budget) {
            t.failed = true;
            t.score = kNegInf;
            t.metrics.area = est.total_area;
            t.metrics.throughput = est.throughput;
            t.metrics.avg_bitwidth = model_avg_bitwidth(designed);
            return t;
        }
    } else {
        try {
            designed = parallelize(annotated, budget, tbl);
        } catch (const InfeasibleBudgetError&) {
            t.failed = true;
            t.score = kNegInf;
            return t;
        }
        designed = insert_buffers(designed);
    }

    auto est = estimate_graph(designed, tbl, &budget);
    auto eval = eval_accuracy(designed, dataset, ExecMode::Quantized);
    t.metrics.accuracy = eval.accuracy;
    t.metrics.avg_bitwidth = eval.avg_bitwidth_model;
    t.metrics.throughput = est.throughput;
    t.metrics.area = est.total_area;
    t.score = objective(t.metrics, w);
    return t;
}

// --- strategies ------------------------------------------------------------

double halton_value(std::uint64_t index, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

namespace {

std::vector<std::uint64_t> first_primes(std::size_t n) {
    std::vector<std::uint64_t> primes;
    std::uint64_t c = 2;
    while (primes.size() < n) {
        bool prime = true;
        for (auto p : primes) {
            if (p * p > c) break;
            if (c % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(c);
        ++c;
    }
    return primes;
}

std::vector<std::size_t> random_point(const SearchSpace& space, std::mt19937_64& rng) {
    std::vector<std::size_t> point(space.dims.size());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        std::uniform_int_distribution<std::size_t> pick(0, space.dims[d].candidates.size() - 1);
        point[d] = pick(rng);
    }
    return point;
}

// Objective vector for domination: maximize every component.
std::array<double, 4> objective_vector(const Trial& t) {
    if (t.failed) return {kNegInf, kNegInf, kNegInf, kNegInf};
    return {t.metrics.accuracy, -t.metrics.avg_bitwidth, t.metrics.throughput, -t.metrics.area};
}

bool dominates(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    bool strictly = false;
    for (int i = 0; i < 4; ++i) {
        if (a[i] < b[i]) return false;
        if (a[i] > b[i]) strictly = true;
    }
    return strictly;
}

// Deb's fast non-dominated sort; returns the rank of each entry.
std::vector<int> non_dominated_sort(const std::vector<std::array<double, 4>>& objs) {
    const std::size_t n = objs.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<int> dom_count(n, 0), rank(n, 0);
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(objs[i], objs[j]))
                dominated[i].push_back(j);
            else if (dominates(objs[j], objs[i]))
                ++dom_count[i];
        }
        if (dom_count[i] == 0) {
            rank[i] = 0;
            front.push_back(i);
        }
    }
    int level = 0;
    while (!front.empty()) {
        std::vector<std::size_t> next;
        for (auto i : front)
            for (auto j : dominated[i])
                if (--dom_count[j] == 0) {
                    rank[j] = level + 1;
                    next.push_back(j);
                }
        front = std::move(next);
        ++level;
    }
    return rank;
}

std::vector<double> crowding_distance(const std::vector<std::array<double, 4>>& objs,
                                      const std::vector<std::size_t>& members) {
    std::vector<double> dist(members.size(), 0.0);
    const std::size_t n = members.size();
    if (n <= 2) return std::vector<double>(n, std::numeric_limits<double>::infinity());
    for (int obj = 0; obj < 4; ++obj) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return objs[members[a]][obj] < objs[members[b]][obj];
        });
        dist[idx.front()] = dist[idx.back()] = std::numeric_limits<double>::infinity();
        const double span = objs[members[idx.back()]][obj] - objs[members[idx.front()]][obj];
        if (span <= 0 || !std::isfinite(span)) continue;
        for (std::size_t i = 1; i + 1 < n; ++i)
            dist[idx[i]] +=
                (objs[members[idx[i + 1]]][obj] - objs[members[idx[i - 1]]][obj]) / span;
    }
    return dist;
}

struct TpeModel {
    // Per-dimension categorical densities with a Laplace prior.
    static std::vector<double> density(const std::vector<std::size_t>& counts_idx,
                                       const std::vector<std::vector<std::size_t>>& points,
                                       std::size_t dim, std::size_t n_candidates) {
        std::vector<double> p(n_candidates, 1.0);  // alpha = 1
        for (auto t : counts_idx) p[points[t][dim]] += 1.0;
        const double total = static_cast<double>(n_candidates + counts_idx.size());
        for (auto& v : p) v /= total;
        return p;
    }
};

}  // namespace

SearchResult search_over(const SearchSpace& space, const SearchSettings& settings,
                         const TrialEvaluator& evaluate) {
    if (space.dims.empty()) search_error("empty search space");
    for (const auto& dim : space.dims)
        if (dim.candidates.empty()) search_error("dimension " + dim.name() + " has no candidates");
    if (settings.n_trials < 1) search_error("n_trials must be >= 1");

    std::mt19937_64 rng(settings.seed);
    SearchResult result;

    auto run_trial = [&](const std::vector<std::size_t>& point) -> const Trial& {
        for (std::size_t d = 0; d < point.size(); ++d)
            if (point[d] >= space.dims[d].candidates.size())
                search_error("proposal left the candidate set");
        Trial t = evaluate(static_cast<int>(result.log.size()), point);
        t.index = static_cast<int>(result.log.size());
        t.seed = settings.seed;
        t.point = point;
        result.log.push_back(std::move(t));
        return result.log.back();
    };

    switch (settings.algo) {
        case SearchAlgo::Random: {
            for (int i = 0; i < settings.n_trials; ++i) run_trial(random_point(space, rng));
            break;
        }
        case SearchAlgo::Qmc: {
            const auto primes = first_primes(space.dims.size());
            const std::uint64_t start = 1 + settings.seed % 8192;
            for (int i = 0; i < settings.n_trials; ++i) {
                std::vector<std::size_t> point(space.dims.size());
                for (std::size_t d = 0; d < space.dims.size(); ++d) {
                    const double u =
                        halton_value(start + static_cast<std::uint64_t>(i), primes[d]);
                    const auto k = space.dims[d].candidates.size();
                    point[d] = std::min(static_cast<std::size_t>(u * static_cast<double>(k)),
                                        k - 1);
                }
                run_trial(point);
            }
            break;
        }
        case SearchAlgo::Tpe: {
            const int startup = std::min(settings.tpe_startup, settings.n_trials);
            for (int i = 0; i < startup; ++i) run_trial(random_point(space, rng));
            for (int i = startup; i < settings.n_trials; ++i) {
                // Split observed trials at the gamma quantile by score.
                std::vector<std::size_t> order(result.log.size());
                for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return result.log[a].score > result.log[b].score;
                });
                const std::size_t n_good = std::max<std::size_t>(
                    1, static_cast<std::size_t>(
                           std::ceil(settings.tpe_gamma * static_cast<double>(order.size()))));
                std::vector<std::size_t> good(order.begin(), order.begin() + n_good);
                std::vector<std::size_t> bad(order.begin() + n_good, order.end());

                std::vector<std::vector<std::size_t>> points;
                points.reserve(result.log.size());
                for (const auto& t : result.log) points.push_back(t.point);

                // Draw candidates from the good model, keep the best
                // likelihood ratio l(x)/g(x).
                std::vector<std::size_t> best_point;
                double best_ratio = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < settings.tpe_candidates; ++c) {
                    std::vector<std::size_t> cand(space.dims.size());
                    double log_ratio = 0;
                    for (std::size_t d = 0; d < space.dims.size(); ++d) {
                        const auto k = space.dims[d].candidates.size();
                        auto l = TpeModel::density(good, points, d, k);
                        auto b = TpeModel::density(bad, points, d, k);
                        std::discrete_distribution<std::size_t> draw(l.begin(), l.end());
                        cand[d] = draw(rng);
                        log_ratio += std::log(l[cand[d]]) - std::log(b[cand[d]]);
                    }
                    if (log_ratio > best_ratio) {
                        best_ratio = log_ratio;
                        best_point = std::move(cand);
                    }
                }
                run_trial(best_point);
            }
            break;
        }
        case SearchAlgo::Nsga2: {
            const int pop_size = std::max(2, std::min(settings.nsga_population, settings.n_trials));
            std::vector<std::size_t> population;  // indices into the log
            for (int i = 0; i < pop_size && static_cast<int>(result.log.size()) < settings.n_trials;
                 ++i) {
                run_trial(random_point(space, rng));
                population.push_back(result.log.size() - 1);
            }

            auto objs_of = [&](const std::vector<std::size_t>& members) {
                std::vector<std::array<double, 4>> objs;
                objs.reserve(members.size());
                for (auto m : members) objs.push_back(objective_vector(result.log[m]));
                return objs;
            };

            while (static_cast<int>(result.log.size()) < settings.n_trials) {
                auto objs = objs_of(population);
                auto rank = non_dominated_sort(objs);
                // Crowding distance per rank level for tournament ties.
                std::vector<double> crowd(population.size(), 0);
                {
                    std::map<int, std::vector<std::size_t>> fronts;
                    for (std::size_t i = 0; i < population.size(); ++i)
                        fronts[rank[i]].push_back(i);
                    for (auto& [lvl, members] : fronts) {
                        auto d = crowding_distance(objs, members);
                        for (std::size_t i = 0; i < members.size(); ++i) crowd[members[i]] = d[i];
                    }
                }
                auto tournament = [&]() -> std::size_t {
                    std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
                    std::size_t a = pick(rng), b = pick(rng);
                    if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
                    return crowd[a] >= crowd[b] ? a : b;
                };

                // Offspring: tournament selection, uniform crossover,
                // per-dimension mutation.
                std::vector<std::size_t> offspring;
                std::uniform_real_distribution<double> coin(0.0, 1.0);
                const double p_mut = 1.0 / static_cast<double>(space.dims.size());
                while (static_cast<int>(offspring.size()) < pop_size &&
                       static_cast<int>(result.log.size()) < settings.n_trials) {
                    const auto& pa = result.log[population[tournament()]].point;
                    const auto& pb = result.log[population[tournament()]].point;
                    std::vector<std::size_t> child(space.dims.size());
                    for (std::size_t d = 0; d < space.dims.size(); ++d)
                        child[d] = coin(rng) < 0.5 ? pa[d] : pb[d];
                    if (coin(rng) >= settings.nsga_crossover) child = pa;  // no crossover
                    for (std::size_t d = 0; d < space.dims.size(); ++d)
                        if (coin(rng) < p_mut) {
                            std::uniform_int_distribution<std::size_t> pick(
                                0, space.dims[d].candidates.size() - 1);
                            child[d] = pick(rng);
                        }
                    run_trial(child);
                    offspring.push_back(result.log.size() - 1);
                }

                // Environmental selection over parents + offspring.
                std::vector<std::size_t> combined = population;
                combined.insert(combined.end(), offspring.begin(), offspring.end());
                auto cobjs = objs_of(combined);
                auto crank = non_dominated_sort(cobjs);
                std::map<int, std::vector<std::size_t>> fronts;
                for (std::size_t i = 0; i < combined.size(); ++i) fronts[crank[i]].push_back(i);
                std::vector<std::size_t> next;
                for (auto& [lvl, members] : fronts) {
                    if (static_cast<int>(next.size()) >= pop_size) break;
                    if (static_cast<int>(next.size() + members.size()) <= pop_size) {
                        for (auto m : members) next.push_back(combined[m]);
                    } else {
                        auto d = crowding_distance(cobjs, members);
                        std::vector<std::size_t> idx(members.size());
                        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                        std::sort(idx.begin(), idx.end(),
                                  [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
                        for (auto i : idx) {
                            if (static_cast<int>(next.size()) >= pop_size) break;
                            next.push_back(combined[members[i]]);
                        }
                    }
                }
                population = std::move(next);
            }
            break;
        }
    }

    // Pareto front of the whole pool via the fast non-dominated sort.
    {
        std::vector<std::array<double, 4>> objs;
        objs.reserve(result.log.size());
        for (const auto& t : result.log) objs.push_back(objective_vector(t));
        auto rank = non_dominated_sort(objs);
        for (std::size_t i = 0; i < result.log.size(); ++i)
            if (rank[i] == 0 && !result.log[i].failed) result.pareto_front.push_back(i);
    }

    // Best non-failed trial by scalar score; earliest wins ties.
    const Trial* best = nullptr;
    for (const auto& t : result.log)
        if (!t.failed && (!best || t.score > best->score)) best = &t;
    result.best = best ? *best : result.log.front();
    return result;
}

SearchResult search(const Graph& g, const SearchSpace& space, const SearchSettings& settings,
                    const ResourceBudget& budget, const CostTable& tbl, const Dataset& dataset) {
    SearchSettings s = settings;
    s.weights = calibrate_weights(s.weights, g, budget, tbl);
    return search_over(space, s, [&](int, const std::vector<std::size_t>& point) {
        QuantConfig cfg = config_from_point(space, point);
        return evaluate_trial(g, cfg, budget, tbl, dataset, s.weights);
    });
}

std::string trial_log_csv(const SearchSpace& space, const SearchResult& result) {
    std::ostringstream os;
    os << "index,seed,score,acc,b,theta,area,failed";
    for (const auto& dim : space.dims) os << "," << dim.name();
    os << "\n";
    for (const auto& t : result.log) {
        os << t.index << "," << t.seed << "," << format_double(t.score) << ","
           << format_double(t.metrics.accuracy) << "," << format_double(t.metrics.avg_bitwidth)
           << "," << format_double(t.metrics.throughput) << "," << format_double(t.metrics.area)
           << "," << (t.failed ? 1 : 0);
        for (std::size_t d = 0; d < space.dims.size(); ++d)
            os << "," << space.dims[d].candidates[t.point[d]];
        os << "\n";
    }
    return os.str();
}

}  // namespace mxflow
