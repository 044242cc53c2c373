#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "grcn/tensor.hpp"

namespace grcn {

enum class Modality { visual = 0, acoustic = 1, textual = 2 };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Raw per-item content matrix for one modality: num_items rows of dim reals.
struct ModalityFeatureTable {
    Modality modality = Modality::visual;
    std::size_t num_items = 0;
    std::size_t dim = 0;
    Tensor features;  // num_items x dim

    static ModalityFeatureTable make(Modality m, std::size_t num_items, std::size_t dim);
};

// Available modalities for a run, in fixed order visual < acoustic < textual.
struct FeatureSet {
    std::vector<ModalityFeatureTable> tables;

    std::size_t count() const { return tables.size(); }
    std::vector<Modality> modalities() const;
    void validate(std::size_t num_items) const;
};

// File format: header line `M D_m`, then M rows of D_m space-separated reals.
ModalityFeatureTable load_feature_file(const std::string& path, Modality m);
void save_feature_file(const std::string& path, const ModalityFeatureTable& table);

// Same on-disk format for arbitrary matrices (embedding exports). Values are
// printed with 17 significant digits, so a reload is bit-identical.
void save_matrix_file(const std::string& path, const Tensor& matrix);
Tensor load_matrix_file(const std::string& path);

}  // namespace grcn
