#include "grcn/features.hpp"

#include <cinttypes>
#include <cstdio>

#include "grcn/errors.hpp"

namespace grcn {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::visual: return "visual";
        case Modality::acoustic: return "acoustic";
        case Modality::textual: return "textual";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "visual") return Modality::visual;
    if (name == "acoustic") return Modality::acoustic;
    if (name == "textual") return Modality::textual;
    throw ValidationError("unknown modality: " + name +
                          " (expected visual, acoustic, or textual)");
}

ModalityFeatureTable ModalityFeatureTable::make(Modality m, std::size_t num_items,
                                                std::size_t dim) {
    ModalityFeatureTable t;
    t.modality = m;
    t.num_items = num_items;
    t.dim = dim;
    t.features = Tensor({num_items, dim});
    return t;
}

std::vector<Modality> FeatureSet::modalities() const {
    std::vector<Modality> out;
    out.reserve(tables.size());
    for (const auto& t : tables) out.push_back(t.modality);
    return out;
}

void FeatureSet::validate(std::size_t num_items) const {
    if (tables.empty()) {
        throw ValidationError("at least one modality feature table is required");
    }
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto& t = tables[i];
        if (t.num_items != num_items) {
            throw ValidationError(std::string("feature table for ") + modality_name(t.modality) +
                                  " has " + std::to_string(t.num_items) + " rows, expected " +
                                  std::to_string(num_items));
        }
        if (!t.features.all_finite()) {
            throw ValidationError(std::string("non-finite value in ") +
                                  modality_name(t.modality) + " features");
        }
        if (i > 0 && !(static_cast<int>(tables[i - 1].modality) < static_cast<int>(t.modality))) {
            throw ValidationError("modalities must be unique and ordered visual<acoustic<textual");
        }
    }
}

Tensor load_matrix_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open matrix file: " + path);
    std::uint64_t rows = 0, cols = 0;
    if (std::fscanf(f, "%" SCNu64 " %" SCNu64, &rows, &cols) != 2 || rows == 0 || cols == 0) {
        std::fclose(f);
        throw ValidationError(path + ": malformed matrix header (expected `rows cols`)");
    }
    Tensor t({rows, cols});
    double* dst = t.data();
    for (std::uint64_t i = 0; i < rows * cols; ++i) {
        if (std::fscanf(f, "%lf", &dst[i]) != 1) {
            std::fclose(f);
            throw ValidationError(path + ": truncated matrix at value " + std::to_string(i));
        }
    }
    std::fclose(f);
    return t;
}

void save_matrix_file(const std::string& path, const Tensor& matrix) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write matrix file: " + path);
    std::fprintf(f, "%zu %zu\n", matrix.rows(), matrix.cols());
    const double* src = matrix.data();
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        for (std::size_t j = 0; j < matrix.cols(); ++j) {
            std::fprintf(f, "%s%.17g", j ? " " : "", src[i * matrix.cols() + j]);
        }
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

ModalityFeatureTable load_feature_file(const std::string& path, Modality m) {
    Tensor values = load_matrix_file(path);
    ModalityFeatureTable t;
    t.modality = m;
    t.num_items = values.rows();
    t.dim = values.cols();
    t.features = std::move(values);
    if (!t.features.all_finite()) {
        throw ValidationError(path + ": non-finite feature value");
    }
    return t;
}

void save_feature_file(const std::string& path, const ModalityFeatureTable& table) {
    save_matrix_file(path, table.features);
}

}  // namespace grcn
