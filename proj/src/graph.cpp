#include "cores/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace cores {

namespace fs = std::filesystem;

std::size_t Subgraph::num_kept_nodes() const {
    return static_cast<std::size_t>(std::count(kept_nodes.begin(), kept_nodes.end(), 1));
}

std::size_t Subgraph::num_kept_edges() const {
    return static_cast<std::size_t>(std::count(kept_edges.begin(), kept_edges.end(), 1));
}

double Subgraph::node_ratio() const {
    if (parent->num_nodes == 0) return 1.0;
    return static_cast<double>(num_kept_nodes()) / static_cast<double>(parent->num_nodes);
}

double Subgraph::edge_ratio() const {
    if (parent->num_edges() == 0) return 1.0;
    return static_cast<double>(num_kept_edges()) / static_cast<double>(parent->num_edges());
}

bool Subgraph::empty(RemovalMode mode) const {
    return mode == RemovalMode::kNode ? num_kept_nodes() == 0 : num_kept_edges() == 0;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) {
        lines.pop_back();
    }
    return lines;
}

long parse_long(const std::string& text, const std::string& path, std::size_t lineno) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(text, &pos);
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected an integer, got '" +
                         text + "'");
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

std::string tu_file(const std::string& directory, const std::string& name,
                    const std::string& suffix) {
    return (fs::path(directory) / (name + suffix)).string();
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw IoError("missing mandatory dataset file: " + path);
}

// Maps arbitrary integer values to contiguous [0, K) by ascending value.
std::map<long, std::size_t> contiguous_remap(const std::vector<long>& values) {
    std::set<long> distinct(values.begin(), values.end());
    std::map<long, std::size_t> remap;
    std::size_t next = 0;
    for (long v : distinct) remap[v] = next++;
    return remap;
}

}  // namespace

std::vector<Graph> parse_tu_dataset(const std::string& directory, const std::string& name) {
    const std::string a_path = tu_file(directory, name, "_A.txt");
    const std::string ind_path = tu_file(directory, name, "_graph_indicator.txt");
    const std::string lab_path = tu_file(directory, name, "_graph_labels.txt");
    require_file(a_path);
    require_file(ind_path);
    require_file(lab_path);

    // Node -> graph assignment (both 1-indexed in the files).
    const auto ind_lines = read_lines(ind_path);
    const std::size_t total_nodes = ind_lines.size();
    std::vector<std::size_t> node_graph(total_nodes);
    std::size_t num_graphs = 0;
    for (std::size_t i = 0; i < total_nodes; ++i) {
        const long g = parse_long(ind_lines[i], ind_path, i + 1);
        if (g < 1) throw ParseError(ind_path + ":" + std::to_string(i + 1) + ": graph id < 1");
        node_graph[i] = static_cast<std::size_t>(g - 1);
        num_graphs = std::max(num_graphs, static_cast<std::size_t>(g));
    }

    const auto label_lines = read_lines(lab_path);
    if (label_lines.size() != num_graphs) {
        throw ParseError(lab_path + ": " + std::to_string(label_lines.size()) +
                         " labels for " + std::to_string(num_graphs) + " graphs");
    }
    std::vector<long> raw_labels(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
        raw_labels[g] = parse_long(label_lines[g], lab_path, g + 1);
    }
    const auto label_remap = contiguous_remap(raw_labels);

    std::vector<Graph> graphs(num_graphs);
    std::vector<std::size_t> local_id(total_nodes);
    for (std::size_t i = 0; i < total_nodes; ++i) {
        Graph& g = graphs[node_graph[i]];
        local_id[i] = g.num_nodes++;
    }
    for (std::size_t g = 0; g < num_graphs; ++g) {
        graphs[g].label = label_remap.at(raw_labels[g]);
    }

    // Optional per-edge labels, aligned with _A.txt rows.
    std::vector<long> edge_labels;
    const std::string elab_path = tu_file(directory, name, "_edge_labels.txt");
    const bool has_edge_labels = fs::exists(elab_path);
    if (has_edge_labels) {
        for (const auto& line : read_lines(elab_path)) {
            edge_labels.push_back(parse_long(line, elab_path, edge_labels.size() + 1));
        }
    }
    const auto edge_label_remap = contiguous_remap(edge_labels);

    // Edges: duplicate directed pairs collapse onto one canonical entry.
    const auto a_lines = read_lines(a_path);
    if (has_edge_labels && edge_labels.size() != a_lines.size()) {
        throw ParseError(elab_path + ": " + std::to_string(edge_labels.size()) +
                         " labels for " + std::to_string(a_lines.size()) + " edge rows");
    }
    std::vector<std::map<std::pair<std::size_t, std::size_t>, std::size_t>> seen(num_graphs);
    for (std::size_t row = 0; row < a_lines.size(); ++row) {
        const auto parts = split_csv(a_lines[row]);
        if (parts.size() != 2) {
            throw ParseError(a_path + ":" + std::to_string(row + 1) +
                             ": expected 'u, v', got '" + a_lines[row] + "'");
        }
        const long ur = parse_long(parts[0], a_path, row + 1);
        const long vr = parse_long(parts[1], a_path, row + 1);
        if (ur < 1 || vr < 1 || static_cast<std::size_t>(ur) > total_nodes ||
            static_cast<std::size_t>(vr) > total_nodes) {
            throw ParseError(a_path + ":" + std::to_string(row + 1) +
                             ": edge references nonexistent node");
        }
        const std::size_t u = static_cast<std::size_t>(ur - 1);
        const std::size_t v = static_cast<std::size_t>(vr - 1);
        if (node_graph[u] != node_graph[v]) {
            throw ParseError(a_path + ":" + std::to_string(row + 1) +
                             ": edge crosses graph boundary");
        }
        if (u == v) continue;  // self-loops are dropped at ingestion
        const std::size_t gid = node_graph[u];
        Graph& g = graphs[gid];
        auto key = std::minmax(local_id[u], local_id[v]);
        std::pair<std::size_t, std::size_t> canon{key.first, key.second};
        if (seen[gid].count(canon)) continue;
        seen[gid][canon] = g.edges.size();
        g.edges.push_back(canon);
        if (has_edge_labels) {
            std::vector<double> onehot(edge_label_remap.size(), 0.0);
            onehot[edge_label_remap.at(edge_labels[row])] = 1.0;
            g.edge_features.push_back(std::move(onehot));
        }
    }

    // Node features: attributes, one-hot labels, or both concatenated.
    const std::string attr_path = tu_file(directory, name, "_node_attributes.txt");
    const std::string nlab_path = tu_file(directory, name, "_node_labels.txt");
    std::vector<std::vector<double>> attributes;
    if (fs::exists(attr_path)) {
        const auto lines = read_lines(attr_path);
        if (lines.size() != total_nodes) {
            throw ParseError(attr_path + ": row count does not match node count");
        }
        attributes.reserve(total_nodes);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::vector<double> row;
            for (const auto& p : split_csv(lines[i])) {
                try {
                    row.push_back(std::stod(p));
                } catch (const std::exception&) {
                    throw ParseError(attr_path + ":" + std::to_string(i + 1) +
                                     ": expected a real number, got '" + p + "'");
                }
            }
            attributes.push_back(std::move(row));
        }
    }
    std::vector<long> node_labels;
    std::map<long, std::size_t> node_label_remap;
    if (fs::exists(nlab_path)) {
        const auto lines = read_lines(nlab_path);
        if (lines.size() != total_nodes) {
            throw ParseError(nlab_path + ": row count does not match node count");
        }
        node_labels.reserve(total_nodes);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            node_labels.push_back(parse_long(lines[i], nlab_path, i + 1));
        }
        node_label_remap = contiguous_remap(node_labels);
    }
    for (auto& g : graphs) g.node_features.resize(g.num_nodes);
    for (std::size_t i = 0; i < total_nodes; ++i) {
        std::vector<double> feat;
        if (!attributes.empty()) feat = attributes[i];
        if (!node_labels.empty()) {
            std::vector<double> onehot(node_label_remap.size(), 0.0);
            onehot[node_label_remap.at(node_labels[i])] = 1.0;
            feat.insert(feat.end(), onehot.begin(), onehot.end());
        }
        if (feat.empty()) feat.push_back(1.0);  // featureless datasets get a constant
        graphs[node_graph[i]].node_features[local_id[i]] = std::move(feat);
    }

    // Optional synthetic ground-truth masks (written by the generator).
    const std::string mask_path = tu_file(directory, name, "_motif_mask.txt");
    if (fs::exists(mask_path)) {
        const auto lines = read_lines(mask_path);
        if (lines.size() != total_nodes) {
            throw ParseError(mask_path + ": row count does not match node count");
        }
        for (auto& g : graphs) g.motif_mask.assign(g.num_nodes, 0);
        for (std::size_t i = 0; i < total_nodes; ++i) {
            graphs[node_graph[i]].motif_mask[local_id[i]] =
                parse_long(lines[i], mask_path, i + 1) != 0 ? 1 : 0;
        }
    }
    return graphs;
}

void write_tu_dataset(const std::vector<Graph>& graphs, const std::string& directory,
                      const std::string& name) {
    fs::create_directories(directory);
    std::ofstream a(tu_file(directory, name, "_A.txt"));
    std::ofstream ind(tu_file(directory, name, "_graph_indicator.txt"));
    std::ofstream lab(tu_file(directory, name, "_graph_labels.txt"));
    std::ofstream attr(tu_file(directory, name, "_node_attributes.txt"));
    if (!a || !ind || !lab || !attr) throw IoError("cannot write TU files under " + directory);

    const bool any_edge_features =
        std::any_of(graphs.begin(), graphs.end(),
                    [](const Graph& g) { return !g.edge_features.empty(); });
    const bool any_mask = std::any_of(graphs.begin(), graphs.end(),
                                      [](const Graph& g) { return !g.motif_mask.empty(); });
    std::ofstream elab, mask;
    if (any_edge_features) elab.open(tu_file(directory, name, "_edge_labels.txt"));
    if (any_mask) mask.open(tu_file(directory, name, "_motif_mask.txt"));

    std::size_t offset = 1;  // TU node ids are global and 1-indexed
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const Graph& graph = graphs[g];
        lab << graph.label << "\n";
        for (std::size_t v = 0; v < graph.num_nodes; ++v) {
            ind << (g + 1) << "\n";
            const auto& feat = graph.node_features[v];
            for (std::size_t j = 0; j < feat.size(); ++j) {
                if (j) attr << ", ";
                attr << feat[j];
            }
            attr << "\n";
            if (any_mask) mask << (graph.motif_mask.empty() ? 0 : int(graph.motif_mask[v])) << "\n";
        }
        for (std::size_t e = 0; e < graph.edges.size(); ++e) {
            const auto [u, v] = graph.edges[e];
            a << (offset + u) << ", " << (offset + v) << "\n";
            a << (offset + v) << ", " << (offset + u) << "\n";
            if (any_edge_features) {
                std::size_t argmax = 0;
                if (!graph.edge_features.empty()) {
                    const auto& ef = graph.edge_features[e];
                    argmax = static_cast<std::size_t>(
                        std::max_element(ef.begin(), ef.end()) - ef.begin());
                }
                elab << argmax << "\n" << argmax << "\n";
            }
        }
        offset += graph.num_nodes;
    }
}

std::size_t num_classes(const std::vector<Graph>& graphs) {
    std::size_t k = 0;
    for (const auto& g : graphs) k = std::max(k, g.label + 1);
    return k;
}

namespace {

// House: 4-cycle base, a roof node on two adjacent corners, both floor
// diagonals. Eight edges over five nodes.
constexpr std::array<std::pair<std::size_t, std::size_t>, 8> kHouseEdges{{
    {0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 4}, {1, 4}, {0, 2}, {1, 3}}};
constexpr std::array<std::pair<std::size_t, std::size_t>, 5> kCycleEdges{{
    {0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}};

}  // namespace

std::vector<Graph> generate_ba_shapes(std::size_t num_graphs, std::size_t base_nodes,
                                      std::uint64_t seed) {
    if (base_nodes < 6) throw ValueError("generate_ba_shapes: base_nodes must be >= 6");
    std::mt19937_64 rng(seed);
    std::vector<Graph> graphs;
    graphs.reserve(num_graphs);
    for (std::size_t idx = 0; idx < num_graphs; ++idx) {
        Graph g;
        g.label = idx % 2;  // alternate for balance: 0 = house, 1 = cycle
        g.num_nodes = base_nodes + 5;
        // Preferential-attachment base with one edge per arriving node; the
        // target pool repeats every endpoint so draws are degree-weighted.
        std::vector<std::size_t> pool{0, 1};
        g.edges.emplace_back(0, 1);
        for (std::size_t v = 2; v < base_nodes; ++v) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            const std::size_t target = pool[pick(rng)];
            g.edges.emplace_back(std::min(v, target), std::max(v, target));
            pool.push_back(v);
            pool.push_back(target);
        }
        const auto& motif = g.label == 0
                                ? std::vector<std::pair<std::size_t, std::size_t>>(
                                      kHouseEdges.begin(), kHouseEdges.end())
                                : std::vector<std::pair<std::size_t, std::size_t>>(
                                      kCycleEdges.begin(), kCycleEdges.end());
        for (auto [u, v] : motif) g.edges.emplace_back(base_nodes + u, base_nodes + v);
        std::uniform_int_distribution<std::size_t> base_pick(0, base_nodes - 1);
        std::uniform_int_distribution<std::size_t> motif_pick(0, 4);
        const std::size_t anchor = base_pick(rng);
        const std::size_t port = base_nodes + motif_pick(rng);
        g.edges.emplace_back(std::min(anchor, port), std::max(anchor, port));

        std::vector<double> degree(g.num_nodes, 0.0);
        for (auto [u, v] : g.edges) {
            degree[u] += 1.0;
            degree[v] += 1.0;
        }
        g.node_features.resize(g.num_nodes);
        for (std::size_t v = 0; v < g.num_nodes; ++v) g.node_features[v] = {1.0, degree[v]};
        g.motif_mask.assign(g.num_nodes, 0);
        for (std::size_t v = base_nodes; v < g.num_nodes; ++v) g.motif_mask[v] = 1;
        graphs.push_back(std::move(g));
    }
    return graphs;
}

std::vector<DatasetSplit> split_folds(const std::vector<Graph>& dataset,
                                      std::array<double, 3> ratios, std::size_t num_folds,
                                      std::uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9) throw ValueError("split ratios must sum to 1");
    if (num_folds < 1) throw ValueError("num_folds must be >= 1");
    const std::size_t n = dataset.size();
    if (n == 0) throw ValueError("cannot split an empty dataset");

    // Group ids by label; fall back to a single group when stratification
    // is impossible.
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[dataset[i].label].push_back(i);
    bool stratified = true;
    for (const auto& [label, ids] : by_class) {
        if (ids.size() < num_folds) {
            std::cerr << "warning: class " << label << " has " << ids.size()
                      << " graphs < " << num_folds << " folds; splitting unstratified\n";
            stratified = false;
            break;
        }
    }
    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        for (auto& [label, ids] : by_class) groups.push_back(ids);
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        groups.push_back(std::move(all));
    }
    std::mt19937_64 rng(seed);
    for (auto& group : groups) std::shuffle(group.begin(), group.end(), rng);

    // Global split sizes: floor, then hand out the remainder by largest
    // fractional part (ties resolved in train, val, test order).
    std::array<std::size_t, 3> sizes;
    std::array<double, 3> frac;
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double exact = ratios[s] * static_cast<double>(n);
        sizes[s] = static_cast<std::size_t>(std::floor(exact));
        frac[s] = exact - std::floor(exact);
        assigned += sizes[s];
    }
    while (assigned < n) {
        int best = 0;
        for (int s = 1; s < 3; ++s) {
            if (frac[s] > frac[best] + 1e-12) best = s;
        }
        ++sizes[best];
        frac[best] = -1.0;
        ++assigned;
    }

    std::vector<DatasetSplit> folds;
    folds.reserve(num_folds);
    for (std::size_t f = 0; f < num_folds; ++f) {
        // Rotate each group, then interleave by largest remaining share so
        // any contiguous cut stays close to class-proportional.
        std::vector<std::vector<std::size_t>> rotated;
        for (const auto& group : groups) {
            const std::size_t offset =
                (f * group.size() + num_folds / 2) / num_folds % group.size();
            std::vector<std::size_t> r(group.begin() + static_cast<std::ptrdiff_t>(offset),
                                       group.end());
            r.insert(r.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(offset));
            rotated.push_back(std::move(r));
        }
        std::vector<std::size_t> order;
        order.reserve(n);
        std::vector<std::size_t> taken(rotated.size(), 0);
        while (order.size() < n) {
            std::size_t best = rotated.size();
            double best_share = -1.0;
            for (std::size_t gi = 0; gi < rotated.size(); ++gi) {
                if (taken[gi] == rotated[gi].size()) continue;
                const double share = static_cast<double>(rotated[gi].size() - taken[gi]) /
                                     static_cast<double>(rotated[gi].size());
                if (share > best_share + 1e-12) {
                    best_share = share;
                    best = gi;
                }
            }
            order.push_back(rotated[best][taken[best]++]);
        }
        DatasetSplit split;
        split.fold_index = f;
        split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
        split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                         order.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
        split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]),
                          order.end());
        folds.push_back(std::move(split));
    }
    return folds;
}

Subgraph apply_action(const Graph& graph, RemovalMode mode,
                      const std::vector<std::uint8_t>& action) {
    Subgraph sub;
    sub.parent = &graph;
    if (mode == RemovalMode::kNode) {
        if (action.size() != graph.num_nodes) {
            throw ShapeError("node action length " + std::to_string(action.size()) +
                             " != node count " + std::to_string(graph.num_nodes));
        }
        sub.kept_nodes.resize(graph.num_nodes);
        for (std::size_t v = 0; v < graph.num_nodes; ++v) sub.kept_nodes[v] = action[v] ? 0 : 1;
        sub.kept_edges.resize(graph.num_edges());
        for (std::size_t e = 0; e < graph.num_edges(); ++e) {
            const auto [u, v] = graph.edges[e];
            sub.kept_edges[e] = (sub.kept_nodes[u] && sub.kept_nodes[v]) ? 1 : 0;
        }
    } else {
        if (action.size() != graph.num_edges()) {
            throw ShapeError("edge action length " + std::to_string(action.size()) +
                             " != edge count " + std::to_string(graph.num_edges()));
        }
        sub.kept_nodes.assign(graph.num_nodes, 1);
        sub.kept_edges.resize(graph.num_edges());
        for (std::size_t e = 0; e < graph.num_edges(); ++e) sub.kept_edges[e] = action[e] ? 0 : 1;
    }
    return sub;
}

namespace {

void append_member(BatchedGraph& out, const Graph& g, const std::vector<std::uint8_t>* kept_nodes,
                   const std::vector<std::uint8_t>* kept_edges, std::size_t member_index) {
    if (g.num_nodes > 0) {
        if (out.feature_dim == 0) {
            out.feature_dim = g.feature_dim();
        } else if (g.feature_dim() != out.feature_dim) {
            throw ShapeError("batch: mixed node feature dimensions " +
                             std::to_string(out.feature_dim) + " vs " +
                             std::to_string(g.feature_dim()));
        }
    }
    std::vector<std::size_t> new_id(g.num_nodes, std::numeric_limits<std::size_t>::max());
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        if (kept_nodes && !(*kept_nodes)[v]) continue;
        new_id[v] = out.num_nodes++;
        out.node_to_graph.push_back(member_index);
        out.node_features.insert(out.node_features.end(), g.node_features[v].begin(),
                                 g.node_features[v].end());
    }
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (kept_edges && !(*kept_edges)[e]) continue;
        const auto [u, v] = g.edges[e];
        out.edges.emplace_back(new_id[u], new_id[v]);
        out.edge_to_graph.push_back(member_index);
    }
    out.labels.push_back(g.label);
    ++out.num_graphs;
}

}  // namespace

BatchedGraph batch(const std::vector<const Graph*>& graphs) {
    BatchedGraph out;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        append_member(out, *graphs[i], nullptr, nullptr, i);
    }
    return out;
}

BatchedGraph batch(const std::vector<Subgraph>& subgraphs) {
    BatchedGraph out;
    for (std::size_t i = 0; i < subgraphs.size(); ++i) {
        append_member(out, *subgraphs[i].parent, &subgraphs[i].kept_nodes,
                      &subgraphs[i].kept_edges, i);
    }
    return out;
}

BatchedGraph batch_single(const Graph& graph) { return batch(std::vector<const Graph*>{&graph}); }

}  // namespace cores
