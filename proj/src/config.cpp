#include "resmamba/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "resmamba/checkpoint.hpp"

namespace rmb {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value)
{
    throw std::invalid_argument("config: invalid value '" + value + "' for key '" + key + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& value)
{
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) bad_value(key, value);
    return out;
}

double parse_real(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        bad_value(key, value);
    }
    if (used != value.size()) bad_value(key, value);
    return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value)
{
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
    if (out.empty()) bad_value(key, value);
    return out;
}

std::string join(const std::vector<std::size_t>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

}  // namespace

PipelineConfig PipelineConfig::for_profile(const std::string& profile)
{
    PipelineConfig c;
    if (profile == "desk") return c;
    if (profile == "full") {
        c.profile = "full";
        c.epochs_ae = 110;
        c.epochs_clf = 110;
        c.lr = 1.5e-5;
        c.lr_clf = 1.5e-5;
        c.clf_arch = "resnet18";
        return c;
    }
    throw std::invalid_argument("config: unknown profile '" + profile + "' (expected desk or full)");
}

TSMambaConfig PipelineConfig::ae_config() const
{
    TSMambaConfig c;
    c.num_layers = widths.size();
    c.widths = widths;
    c.d_state = d_state;
    c.mlp_ratio = mlp_ratio;
    c.image_height = c.image_width = image_size;
    c.in_channels = channels;
    c.scan_mode = scan_mode;
    return c;
}

ClassifierConfig PipelineConfig::classifier_config() const
{
    if (clf_arch == "resnet18") return ClassifierConfig::resnet18(channels, num_classes);
    ClassifierConfig c;
    c.in_channels = channels;
    c.num_classes = num_classes;
    c.widths = clf_widths;
    c.blocks = clf_blocks;
    return c;
}

void PipelineConfig::validate() const
{
    ae_config().validate();
    classifier_config().validate();
    if (channels != 1 && channels != 3) throw std::invalid_argument("config: channels must be 1 or 3");
    if (batch == 0) throw std::invalid_argument("config: batch must be positive");
    if (!(lr > 0.0) || !(lr_clf > 0.0)) throw std::invalid_argument("config: learning rates must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("config: train_fraction must lie in (0, 1)");
    }
    if (clf_arch != "basic" && clf_arch != "resnet18") {
        throw std::invalid_argument("config: clf_arch must be basic or resnet18");
    }
    if (target_class.empty()) throw std::invalid_argument("config: target_class is empty");
}

std::string PipelineConfig::to_text() const
{
    std::ostringstream os;
    os << "profile = " << profile << '\n'
       << "image_size = " << image_size << '\n'
       << "channels = " << channels << '\n'
       << "widths = " << join(widths) << '\n'
       << "d_state = " << d_state << '\n'
       << "mlp_ratio = " << mlp_ratio << '\n'
       << "scan_mode = " << (scan_mode == ScanMode::Parallel ? "parallel" : "sequential") << '\n'
       << "epochs_ae = " << epochs_ae << '\n'
       << "epochs_clf = " << epochs_clf << '\n'
       << "lr = " << format_double(lr) << '\n'
       << "lr_clf = " << format_double(lr_clf) << '\n'
       << "batch = " << batch << '\n'
       << "seed = " << seed << '\n'
       << "target_class = " << target_class << '\n'
       << "num_classes = " << num_classes << '\n'
       << "train_fraction = " << format_double(train_fraction) << '\n'
       << "clf_arch = " << clf_arch << '\n'
       << "clf_widths = " << join(clf_widths) << '\n'
       << "clf_blocks = " << join(clf_blocks) << '\n';
    return os.str();
}

PipelineConfig parse_config(const std::string& text)
{
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    std::string profile = "desk";
    for (const auto& [k, v] : entries) {
        if (k == "profile") profile = v;
    }
    PipelineConfig c = PipelineConfig::for_profile(profile);
    bool lr_clf_set = false;
    for (const auto& [k, v] : entries) {
        if (k == "profile") continue;
        else if (k == "image_size") c.image_size = parse_uint(k, v);
        else if (k == "channels") c.channels = parse_uint(k, v);
        else if (k == "widths") c.widths = parse_list(k, v);
        else if (k == "d_state") c.d_state = parse_uint(k, v);
        else if (k == "mlp_ratio") c.mlp_ratio = parse_uint(k, v);
        else if (k == "scan_mode") {
            if (v == "parallel") c.scan_mode = ScanMode::Parallel;
            else if (v == "sequential") c.scan_mode = ScanMode::Sequential;
            else bad_value(k, v);
        }
        else if (k == "epochs_ae") c.epochs_ae = parse_uint(k, v);
        else if (k == "epochs_clf") c.epochs_clf = parse_uint(k, v);
        else if (k == "lr") c.lr = parse_real(k, v);
        else if (k == "lr_clf") {
            c.lr_clf = parse_real(k, v);
            lr_clf_set = true;
        }
        else if (k == "batch") c.batch = parse_uint(k, v);
        else if (k == "seed") c.seed = parse_uint(k, v);
        else if (k == "target_class") c.target_class = v;
        else if (k == "num_classes") c.num_classes = parse_uint(k, v);
        else if (k == "train_fraction") c.train_fraction = parse_real(k, v);
        else if (k == "clf_arch") c.clf_arch = v;
        else if (k == "clf_widths") c.clf_widths = parse_list(k, v);
        else if (k == "clf_blocks") c.clf_blocks = parse_list(k, v);
        else throw std::invalid_argument("config: unknown key '" + k + "'");
    }
    // A single `lr` applies to both phases unless lr_clf is given explicitly.
    if (!lr_clf_set) c.lr_clf = c.lr;
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace rmb
