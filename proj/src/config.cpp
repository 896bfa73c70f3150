#include "cores/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cores/numfmt.hpp"

namespace cores {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValueError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValueError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ValueError("config: key '" + key + "' expects a non-negative integer, got '" + v +
                         "'");
    }
}

using Setter = std::function<void(FullConfig&, const std::string&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s = {
        {"gnn",
         {
             {"architecture",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  if (v == "gin") c.train.gnn.architecture = GnnArch::kGin;
                  else if (v == "gcn") c.train.gnn.architecture = GnnArch::kGcn;
                  else throw ValueError("config: key '" + k + "' expects gin or gcn");
              }},
             {"num_layers", [](FullConfig& c, const std::string& k,
                               const std::string& v) { c.train.gnn.num_layers = parse_size(v, k); }},
             {"hidden_dim", [](FullConfig& c, const std::string& k,
                               const std::string& v) { c.train.gnn.hidden_dim = parse_size(v, k); }},
             {"dropout", [](FullConfig& c, const std::string& k,
                            const std::string& v) { c.train.gnn.dropout = parse_double(v, k); }},
             {"batch_norm", [](FullConfig& c, const std::string& k,
                               const std::string& v) { c.train.gnn.batch_norm = parse_bool(v, k); }},
             {"pooling",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.gnn.pool_mean = v.find("mean") != std::string::npos;
                  c.train.gnn.pool_add = v.find("add") != std::string::npos;
                  if (!c.train.gnn.pool_mean && !c.train.gnn.pool_add) {
                      throw ValueError("config: key '" + k + "' expects mean, add or mean,add");
                  }
              }},
             {"gin_epsilon", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.gnn.gin_epsilon = parse_double(v, k);
              }},
             {"gin_epsilon_trainable",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.gnn.gin_epsilon_trainable = parse_bool(v, k);
              }},
             {"num_classes", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.gnn.num_classes = parse_size(v, k);
              }},
         }},
        {"ppo",
         {
             {"clip_epsilon", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.clip_epsilon = parse_double(v, k);
              }},
             {"entropy_coef", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.entropy_coef = parse_double(v, k);
              }},
             {"value_coef", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.value_coef = parse_double(v, k);
              }},
             {"ppo_epochs", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.ppo_epochs = parse_size(v, k);
              }},
             {"minibatch_size", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.minibatch_size = parse_size(v, k);
              }},
             {"policy_lr", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.policy_lr = parse_double(v, k);
              }},
             {"critic_lr_ratio", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.critic_lr_ratio = parse_double(v, k);
              }},
             {"advantage_normalization",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.advantage_normalization = parse_bool(v, k);
              }},
             {"env_steps", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo.env_steps = parse_size(v, k);
              }},
         }},
        {"reward",
         {
             {"lambda", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.reward.lambda = parse_double(v, k);
              }},
             {"desired_ratio", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.reward.desired_ratio = parse_double(v, k);
              }},
             {"env_penalty", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.reward.env_penalty = parse_double(v, k);
              }},
             {"alpha_conf", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.reward.alpha_conf = parse_double(v, k);
              }},
         }},
        {"train",
         {
             {"classifier_lr", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.classifier_lr = parse_double(v, k);
              }},
             {"classifier_scheduler_factor",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.classifier_scheduler_factor = parse_double(v, k);
              }},
             {"rl_scheduler_factor",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.rl_scheduler_factor = parse_double(v, k);
              }},
             {"batch_size", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.batch_size = parse_size(v, k);
              }},
             {"max_epochs", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.max_epochs = parse_size(v, k);
              }},
             {"early_stop_patience", [](FullConfig& c, const std::string& k,
                                        const std::string& v) {
                  c.train.early_stop_patience = parse_size(v, k);
              }},
             {"ppo_patience", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.ppo_patience = parse_size(v, k);
              }},
             {"seed", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.seed = parse_size(v, k);
              }},
             {"mode",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  if (v == "node") c.train.mode = RemovalMode::kNode;
                  else if (v == "edge") c.train.mode = RemovalMode::kEdge;
                  else throw ValueError("config: key '" + k + "' expects node or edge");
              }},
             {"report_last_epoch", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.report_last_epoch = parse_bool(v, k);
              }},
             {"conformal_holdout", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.conformal_holdout = parse_double(v, k);
              }},
             {"override_lr_order", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.train.override_lr_order = parse_bool(v, k);
              }},
             {"splits",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  std::istringstream is(v);
                  std::string part;
                  std::vector<double> parts;
                  while (std::getline(is, part, ',')) parts.push_back(parse_double(trim(part), k));
                  if (parts.size() != 3) {
                      throw ValueError("config: key '" + k + "' expects three ratios");
                  }
                  c.train.splits = {parts[0], parts[1], parts[2]};
              }},
         }},
        {"data",
         {
             {"dataset", [](FullConfig& c, const std::string&,
                            const std::string& v) { c.data.dataset = v; }},
             {"data_dir", [](FullConfig& c, const std::string&,
                             const std::string& v) { c.data.data_dir = v; }},
             {"num_folds", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.data.num_folds = parse_size(v, k);
              }},
             {"synthetic_graphs", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.data.synthetic_graphs = parse_size(v, k);
              }},
             {"synthetic_base_nodes",
              [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.data.synthetic_base_nodes = parse_size(v, k);
              }},
             {"synthetic_seed", [](FullConfig& c, const std::string& k, const std::string& v) {
                  c.data.synthetic_seed = parse_size(v, k);
              }},
         }},
    };
    return s;
}

}  // namespace

FullConfig FullConfig::parse_text(const std::string& text) {
    FullConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ValueError("config line " + std::to_string(lineno) + ": malformed section");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!schema().count(section)) {
                throw ValueError("config: unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValueError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ValueError("config: key '" + key + "' appears before any section");
        }
        const auto& keys = schema().at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) {
            throw ValueError("config: unknown key '" + key + "' in section [" + section + "]");
        }
        it->second(cfg, section + "." + key, value);
    }
    return cfg;
}

FullConfig FullConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_text(buffer.str());
}

std::string FullConfig::serialize() const {
    std::ostringstream os;
    os << "[data]\n"
       << "dataset=" << data.dataset << "\n"
       << "data_dir=" << data.data_dir << "\n"
       << "num_folds=" << data.num_folds << "\n"
       << "synthetic_graphs=" << data.synthetic_graphs << "\n"
       << "synthetic_base_nodes=" << data.synthetic_base_nodes << "\n"
       << "synthetic_seed=" << data.synthetic_seed << "\n";
    os << "\n[gnn]\n" << train.gnn.to_key_values();
    os << "\n[ppo]\n"
       << "clip_epsilon=" << format_double(train.ppo.clip_epsilon) << "\n"
       << "entropy_coef=" << format_double(train.ppo.entropy_coef) << "\n"
       << "value_coef=" << format_double(train.ppo.value_coef) << "\n"
       << "ppo_epochs=" << train.ppo.ppo_epochs << "\n"
       << "minibatch_size=" << train.ppo.minibatch_size << "\n"
       << "policy_lr=" << format_double(train.ppo.policy_lr) << "\n"
       << "critic_lr_ratio=" << format_double(train.ppo.critic_lr_ratio) << "\n"
       << "advantage_normalization=" << (train.ppo.advantage_normalization ? "true" : "false")
       << "\n"
       << "env_steps=" << train.ppo.env_steps << "\n";
    os << "\n[reward]\n"
       << "lambda=" << format_double(train.reward.lambda) << "\n"
       << "desired_ratio=" << format_double(train.reward.desired_ratio) << "\n"
       << "env_penalty=" << format_double(train.reward.env_penalty) << "\n"
       << "alpha_conf=" << format_double(train.reward.alpha_conf) << "\n";
    os << "\n[train]\n"
       << "classifier_lr=" << format_double(train.classifier_lr) << "\n"
       << "classifier_scheduler_factor=" << format_double(train.classifier_scheduler_factor)
       << "\n"
       << "rl_scheduler_factor=" << format_double(train.rl_scheduler_factor) << "\n"
       << "batch_size=" << train.batch_size << "\n"
       << "max_epochs=" << train.max_epochs << "\n"
       << "early_stop_patience=" << train.early_stop_patience << "\n"
       << "ppo_patience=" << train.ppo_patience << "\n"
       << "seed=" << train.seed << "\n"
       << "mode=" << (train.mode == RemovalMode::kNode ? "node" : "edge") << "\n"
       << "report_last_epoch=" << (train.report_last_epoch ? "true" : "false") << "\n"
       << "conformal_holdout=" << format_double(train.conformal_holdout) << "\n"
       << "override_lr_order=" << (train.override_lr_order ? "true" : "false") << "\n"
       << "splits=" << format_double(train.splits[0]) << "," << format_double(train.splits[1])
       << "," << format_double(train.splits[2]) << "\n";
    return os.str();
}

}  // namespace cores
