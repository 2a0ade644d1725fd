#include "resmamba/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "resmamba/ops.hpp"
#include "resmamba/optim.hpp"
#include "resmamba/rng.hpp"

namespace rmb {

namespace {

// Seed streams derived from the run seed.
constexpr std::uint64_t kAeInitStream = 1;
constexpr std::uint64_t kClfInitStream = 2;
constexpr std::uint64_t kAeShuffleStream = 1000;
constexpr std::uint64_t kClfShuffleStream = 2000;

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::uint64_t seed)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
    }
    return out;
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch)
{
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        std::vector<std::size_t> idx(std::min(n, start + batch) - start);
        std::iota(idx.begin(), idx.end(), start);
        out.push_back(std::move(idx));
    }
    return out;
}

void require_finite(double loss, const char* phase, std::size_t epoch, std::size_t batch)
{
    if (!std::isfinite(loss)) {
        throw std::runtime_error(std::string(phase) + ": loss became " + std::to_string(loss) + " at epoch " +
                                 std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1) +
                                 "; lower the learning rate");
    }
}

void check_image_geometry(const Dataset& ds, const PipelineConfig& config)
{
    if (ds.height != config.image_size || ds.width != config.image_size || ds.channels != config.channels) {
        throw std::invalid_argument("dataset images are " + std::to_string(ds.channels) + "x" +
                                    std::to_string(ds.height) + "x" + std::to_string(ds.width) +
                                    " but the config expects " + std::to_string(config.channels) + "x" +
                                    std::to_string(config.image_size) + "x" + std::to_string(config.image_size));
    }
}

double reconstruction_loss_on(const AEModel& ae, const Dataset& ds, std::size_t batch)
{
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& idx : sequential_batches(ds.size(), batch)) {
        const Tensor x = ds.batch(idx);
        total += reconstruction_loss(x, ae.forward(x)).item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(ds.size());
}

Tensor residual_input(const std::vector<std::vector<double>>& residuals, std::span<const std::size_t> idx,
                      const Dataset& ds, double scale)
{
    std::vector<double> values;
    values.reserve(idx.size() * ds.image_numel());
    for (auto i : idx) {
        for (double v : residuals[i]) values.push_back(v * scale);
    }
    return Tensor({idx.size(), ds.channels, ds.height, ds.width}, std::move(values));
}

struct LossAndAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

LossAndAccuracy score_classifier(const ClassifierModel& model, const std::vector<std::vector<double>>& residuals,
                                 const std::vector<std::size_t>& labels, const Dataset& ds, double scale,
                                 std::size_t batch)
{
    NoGradGuard no_grad;
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : sequential_batches(ds.size(), batch)) {
        std::vector<std::size_t> y;
        for (auto i : idx) y.push_back(labels[i]);
        const Tensor logits = model.forward(residual_input(residuals, idx, ds, scale));
        loss += cross_entropy(logits, y).item() * static_cast<double>(idx.size());
        const auto pred = predict(logits);
        for (std::size_t k = 0; k < y.size(); ++k) correct += pred[k] == y[k];
    }
    const auto n = static_cast<double>(ds.size());
    return {loss / n, static_cast<double>(correct) / n};
}

std::string join_names(const std::vector<std::string>& names)
{
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
    return out;
}

std::vector<std::string> split_names(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

void require_kind(const Checkpoint& ckpt, const std::string& kind)
{
    const auto actual = ckpt.meta("kind");
    if (actual != kind) {
        throw std::runtime_error("expected a " + kind + " checkpoint, found kind '" + actual.value_or("<none>") + "'");
    }
}

}  // namespace

std::string curve_csv(const Curve& curve)
{
    std::ostringstream os;
    os << "epoch,train,val\n";
    for (std::size_t e = 0; e < curve.train.size(); ++e) {
        os << e + 1 << ',' << format_double(curve.train[e]) << ','
           << (e < curve.val.size() ? format_double(curve.val[e]) : std::string()) << '\n';
    }
    return os.str();
}

Phase1Result train_phase1(const Dataset& train, const Dataset& val, const PipelineConfig& config,
                          const EpochObserver& observer)
{
    config.validate();
    check_image_geometry(train, config);
    const std::size_t target = train.class_index(config.target_class);
    const Dataset train_target = train.only_class(target);
    const Dataset val_target = val.size() > 0 ? val.only_class(val.class_index(config.target_class)) : Dataset{};
    if (train_target.size() == 0) {
        throw std::invalid_argument("phase 1: no training images of target class '" + config.target_class + "'");
    }

    Phase1Result result{AEModel(config.ae_config(), mix_seed(config.seed, kAeInitStream)), {}};
    auto params = parameter_tensors(result.model.named_parameters());
    AdamState adam;
    adam.learning_rate = config.lr;

    for (std::size_t epoch = 0; epoch < config.epochs_ae; ++epoch) {
        double total = 0.0;
        const auto batches = epoch_batches(train_target.size(), config.batch, mix_seed(config.seed, kAeShuffleStream + epoch));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Tensor x = train_target.batch(batches[b]);
            Tensor loss = reconstruction_loss(x, result.model.forward(x));
            require_finite(loss.item(), "phase 1", epoch, b);
            zero_grads(params);
            loss.backward();
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(batches[b].size());
        }
        const double train_loss = total / static_cast<double>(train_target.size());
        const double val_loss = val_target.size() > 0 ? reconstruction_loss_on(result.model, val_target, config.batch)
                                                      : std::nan("");
        result.loss.train.push_back(train_loss);
        result.loss.val.push_back(val_loss);
        if (observer) observer("ae", epoch + 1, train_loss, val_loss);
    }
    return result;
}

LabelMap LabelMap::for_dataset(const Dataset& dataset, std::size_t num_classes, const std::string& target_class)
{
    LabelMap m;
    if (num_classes == dataset.num_classes()) {
        m.class_names = dataset.class_names;
        m.label_of.resize(num_classes);
        std::iota(m.label_of.begin(), m.label_of.end(), std::size_t{0});
        return m;
    }
    if (num_classes == 2) {
        const std::size_t target = dataset.class_index(target_class);
        m.class_names = {"rest", target_class};
        m.label_of.assign(dataset.num_classes(), 0);
        m.label_of[target] = 1;
        return m;
    }
    throw std::invalid_argument("class-count mismatch: classifier has " + std::to_string(num_classes) +
                                " classes but the dataset has " + std::to_string(dataset.num_classes()) +
                                " (only equal counts or a 2-class target-vs-rest model are supported)");
}

std::vector<std::size_t> LabelMap::map(std::span<const std::size_t> dataset_labels) const
{
    std::vector<std::size_t> out;
    out.reserve(dataset_labels.size());
    for (auto l : dataset_labels) {
        if (l >= label_of.size()) throw std::invalid_argument("label map: dataset label out of range");
        out.push_back(label_of[l]);
    }
    return out;
}

std::vector<std::vector<double>> compute_residuals(const AEModel& ae, const Dataset& dataset, std::size_t batch)
{
    NoGradGuard no_grad;
    std::vector<std::vector<double>> out;
    out.reserve(dataset.size());
    const std::size_t n = dataset.image_numel();
    for (const auto& idx : sequential_batches(dataset.size(), std::max<std::size_t>(batch, 1))) {
        const Tensor x = dataset.batch(idx);
        const Tensor diff = residual(x, ae.forward(x));
        const auto r = diff.values();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.emplace_back(r.begin() + static_cast<std::ptrdiff_t>(k * n),
                             r.begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
        }
    }
    return out;
}

std::vector<double> mean_residuals(const AEModel& ae, const Dataset& dataset, std::size_t batch)
{
    std::vector<double> out;
    for (const auto& r : compute_residuals(ae, dataset, batch)) {
        out.push_back(std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size()));
    }
    return out;
}

Phase2Result train_phase2(const AEModel& ae, const Dataset& train, const Dataset& val, const PipelineConfig& config,
                          const EpochObserver& observer)
{
    config.validate();
    check_image_geometry(train, config);
    if (train.size() == 0) throw std::invalid_argument("phase 2: training split is empty");
    const LabelMap labels = LabelMap::for_dataset(train, config.num_classes, config.target_class);
    const auto train_labels = labels.map(train.labels());
    const auto val_labels = labels.map(val.labels());

    const auto train_residuals = compute_residuals(ae, train, config.batch);
    const auto val_residuals = compute_residuals(ae, val, config.batch);

    // Residuals are small in absolute terms; rescale them to unit RMS over the training split.
    double sq = 0.0;
    std::size_t count = 0;
    for (const auto& r : train_residuals) {
        for (double v : r) sq += v * v;
        count += r.size();
    }
    const double rms = std::sqrt(sq / static_cast<double>(count));
    const double scale = rms > 0.0 ? 1.0 / rms : 1.0;

    Phase2Result result{{ClassifierModel(config.classifier_config(), mix_seed(config.seed, kClfInitStream)),
                         labels.class_names, scale},
                        {},
                        {}};
    auto& model = result.classifier.model;
    auto params = parameter_tensors(model.named_parameters());
    AdamState adam;
    adam.learning_rate = config.lr_clf;

    for (std::size_t epoch = 0; epoch < config.epochs_clf; ++epoch) {
        double total = 0.0;
        std::size_t correct = 0;
        const auto batches = epoch_batches(train.size(), config.batch, mix_seed(config.seed, kClfShuffleStream + epoch));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<std::size_t> y;
            for (auto i : batches[b]) y.push_back(train_labels[i]);
            const Tensor logits = model.forward(residual_input(train_residuals, batches[b], train, scale));
            Tensor loss = cross_entropy(logits, y);
            require_finite(loss.item(), "phase 2", epoch, b);
            const auto pred = predict(logits);
            for (std::size_t k = 0; k < y.size(); ++k) correct += pred[k] == y[k];
            zero_grads(params);
            loss.backward();
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(y.size());
        }
        const double n = static_cast<double>(train.size());
        const double train_loss = total / n, train_acc = static_cast<double>(correct) / n;
        LossAndAccuracy v{std::nan(""), std::nan("")};
        if (val.size() > 0) v = score_classifier(model, val_residuals, val_labels, val, scale, config.batch);
        result.loss.train.push_back(train_loss);
        result.loss.val.push_back(v.loss);
        result.accuracy.train.push_back(train_acc);
        result.accuracy.val.push_back(v.accuracy);
        if (observer) {
            observer("clf-loss", epoch + 1, train_loss, v.loss);
            observer("clf-accuracy", epoch + 1, train_acc, v.accuracy);
        }
    }
    return result;
}

Evaluation evaluate(const AEModel& ae, const TrainedClassifier& classifier, const Dataset& dataset,
                    const PipelineConfig& config)
{
    if (dataset.size() == 0) throw std::invalid_argument("evaluate: dataset is empty");
    check_image_geometry(dataset, config);
    const std::size_t k = classifier.model.config().num_classes;
    if (classifier.class_names.size() != k) {
        throw std::invalid_argument("evaluate: classifier lists " + std::to_string(classifier.class_names.size()) +
                                    " class names for " + std::to_string(k) + " outputs");
    }
    const LabelMap labels = LabelMap::for_dataset(dataset, k, config.target_class);
    if (labels.class_names != classifier.class_names) {
        throw std::invalid_argument("evaluate: classifier classes {" + join_names(classifier.class_names) +
                                    "} do not match dataset classes {" + join_names(labels.class_names) + "}");
    }
    const auto truth = labels.map(dataset.labels());
    const auto residuals = compute_residuals(ae, dataset, config.batch);

    NoGradGuard no_grad;
    std::vector<std::size_t> predicted;
    for (const auto& idx : sequential_batches(dataset.size(), config.batch)) {
        const auto p =
            predict(classifier.model.forward(residual_input(residuals, idx, dataset, classifier.residual_scale)));
        predicted.insert(predicted.end(), p.begin(), p.end());
    }
    Evaluation out{confusion(truth, predicted, labels.class_names), {}};
    out.report = kpis(out.confusion);
    return out;
}

Checkpoint autoencoder_checkpoint(const AEModel& ae, const PipelineConfig& config, std::size_t epoch, double loss)
{
    Checkpoint ckpt = checkpoint_from_parameters(ae.named_parameters());
    ckpt.set_meta("kind", "autoencoder");
    ckpt.set_meta("config", config.to_text());
    ckpt.set_meta("epoch", std::to_string(epoch));
    ckpt.set_meta("loss", format_double(loss));
    return ckpt;
}

AEModel load_autoencoder(const Checkpoint& checkpoint, const PipelineConfig& config)
{
    require_kind(checkpoint, "autoencoder");
    AEModel ae(config.ae_config(), 0);
    restore_parameters(ae.named_parameters(), checkpoint);
    return ae;
}

Checkpoint classifier_checkpoint(const TrainedClassifier& classifier, const PipelineConfig& config, std::size_t epoch,
                                 double loss)
{
    Checkpoint ckpt = checkpoint_from_parameters(classifier.model.named_parameters());
    ckpt.set_meta("kind", "classifier");
    ckpt.set_meta("config", config.to_text());
    ckpt.set_meta("epoch", std::to_string(epoch));
    ckpt.set_meta("loss", format_double(loss));
    ckpt.set_meta("num_classes", std::to_string(classifier.model.config().num_classes));
    ckpt.set_meta("class_names", join_names(classifier.class_names));
    ckpt.set_meta("residual_scale", format_double(classifier.residual_scale));
    return ckpt;
}

TrainedClassifier load_classifier(const Checkpoint& checkpoint, const PipelineConfig& config)
{
    require_kind(checkpoint, "classifier");
    const auto stored = std::stoull(checkpoint.require_meta("num_classes"));
    if (stored != config.num_classes) {
        throw std::invalid_argument("class-count mismatch: checkpoint classifier has " + std::to_string(stored) +
                                    " classes, config num_classes is " + std::to_string(config.num_classes));
    }
    TrainedClassifier out{ClassifierModel(config.classifier_config(), 0),
                          split_names(checkpoint.require_meta("class_names")),
                          std::stod(checkpoint.require_meta("residual_scale"))};
    load_weights(out.model, checkpoint);
    return out;
}

}  // namespace rmb
