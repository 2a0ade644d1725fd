#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resmamba/autoencoder.hpp"
#include "resmamba/checkpoint.hpp"
#include "resmamba/classifier.hpp"
#include "resmamba/config.hpp"
#include "resmamba/dataset.hpp"
#include "resmamba/metrics.hpp"

namespace rmb {

/// Per-epoch values for the training and validation split.
struct Curve {
    std::vector<double> train;
    std::vector<double> val;
};

/// CSV with header `epoch,train,val`, epochs numbered from 1.
std::string curve_csv(const Curve& curve);

/// Called after every epoch with (phase, epoch, train value, val value).
using EpochObserver = std::function<void(const std::string&, std::size_t, double, double)>;

struct Phase1Result {
    AEModel model;
    Curve loss;
};

/// Trains the autoencoder on the target-class images of `train` only;
/// validation loss uses the target-class images of `val`.
Phase1Result train_phase1(const Dataset& train, const Dataset& val, const PipelineConfig& config,
                          const EpochObserver& observer = {});

/// How dataset classes map onto classifier outputs. With as many outputs as
/// dataset classes the mapping is the identity; with two outputs every
/// non-target class becomes "rest" (label 0) and the target becomes label 1.
struct LabelMap {
    std::vector<std::string> class_names;
    std::vector<std::size_t> label_of;  // dataset label -> classifier label

    static LabelMap for_dataset(const Dataset& dataset, std::size_t num_classes, const std::string& target_class);
    std::vector<std::size_t> map(std::span<const std::size_t> dataset_labels) const;
};

/// Reconstruction residuals |x - ae(x)| for every image, planar like Dataset::images.
std::vector<std::vector<double>> compute_residuals(const AEModel& ae, const Dataset& dataset, std::size_t batch);

/// Per-image mean of the reconstruction residual.
std::vector<double> mean_residuals(const AEModel& ae, const Dataset& dataset, std::size_t batch);

struct TrainedClassifier {
    ClassifierModel model;
    std::vector<std::string> class_names;
    double residual_scale = 1.0;  // classifier input = residual * residual_scale
};

struct Phase2Result {
    TrainedClassifier classifier;
    Curve loss;
    Curve accuracy;
};

/// Trains the classifier on frozen-autoencoder residuals of all classes.
Phase2Result train_phase2(const AEModel& ae, const Dataset& train, const Dataset& val, const PipelineConfig& config,
                          const EpochObserver& observer = {});

struct Evaluation {
    ConfusionMatrix confusion;
    ClassReport report;
};

Evaluation evaluate(const AEModel& ae, const TrainedClassifier& classifier, const Dataset& dataset,
                    const PipelineConfig& config);

/// Checkpoints carry `kind`, the config echo, epoch and final loss in their metadata.
Checkpoint autoencoder_checkpoint(const AEModel& ae, const PipelineConfig& config, std::size_t epoch, double loss);
AEModel load_autoencoder(const Checkpoint& checkpoint, const PipelineConfig& config);

Checkpoint classifier_checkpoint(const TrainedClassifier& classifier, const PipelineConfig& config, std::size_t epoch,
                                 double loss);
TrainedClassifier load_classifier(const Checkpoint& checkpoint, const PipelineConfig& config);

}  // namespace rmb
