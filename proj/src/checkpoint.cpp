#include "grcn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "grcn/config.hpp"
#include "grcn/errors.hpp"

namespace grcn {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_all(std::FILE* f, const void* data, std::size_t bytes, const std::string& path) {
    if (std::fwrite(data, 1, bytes, f) != bytes) {
        throw IoError("short write to checkpoint: " + path);
    }
}

void read_all(std::FILE* f, void* data, std::size_t bytes, const std::string& path) {
    if (std::fread(data, 1, bytes, f) != bytes) {
        throw IoError("truncated checkpoint: " + path);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write checkpoint: " + path);

    nlohmann::ordered_json header;
    header["hyper"] = hyper_to_json(ckpt.params.hyper);
    header["num_users"] = ckpt.params.num_users;
    header["num_items"] = ckpt.params.num_items;
    std::vector<std::string> mods;
    for (Modality m : ckpt.params.modalities) mods.push_back(modality_name(m));
    header["modalities"] = mods;
    header["seed"] = ckpt.seed;
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(ckpt.id_digest));
    header["id_digest"] = digest;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& [name, t] : ckpt.params.trainable()) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["shape"] = t->shape();
        tensors.push_back(entry);
    }
    header["tensors"] = tensors;
    std::string header_text = header.dump();

    write_all(f.get(), kMagic, sizeof kMagic, path);
    write_all(f.get(), &kVersion, sizeof kVersion, path);
    std::uint64_t header_len = header_text.size();
    write_all(f.get(), &header_len, sizeof header_len, path);
    write_all(f.get(), header_text.data(), header_text.size(), path);
    for (const auto& [name, t] : ckpt.params.trainable()) {
        write_all(f.get(), t->data(), t->numel() * sizeof(double), path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open checkpoint: " + path);

    char magic[8];
    read_all(f.get(), magic, sizeof magic, path);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ValidationError(path + ": not a checkpoint file");
    }
    std::uint32_t version = 0;
    read_all(f.get(), &version, sizeof version, path);
    if (version != kVersion) {
        throw ValidationError(path + ": unsupported checkpoint version " +
                              std::to_string(version));
    }
    std::uint64_t header_len = 0;
    read_all(f.get(), &header_len, sizeof header_len, path);
    std::string header_text(header_len, '\0');
    read_all(f.get(), header_text.data(), header_len, path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": corrupt checkpoint header: " + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.params.hyper = hyper_from_json(header.at("hyper"));
        ckpt.params.num_users = header.at("num_users").get<std::size_t>();
        ckpt.params.num_items = header.at("num_items").get<std::size_t>();
        for (const auto& name : header.at("modalities")) {
            ckpt.params.modalities.push_back(modality_from_name(name.get<std::string>()));
        }
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        ckpt.id_digest = std::stoull(header.at("id_digest").get<std::string>(), nullptr, 16);

        // Rebuild the modal parameter slots, then fill every tensor from the
        // directory in file order.
        for (Modality m : ckpt.params.modalities) {
            ModalityParams mp;
            mp.modality = m;
            ckpt.params.refine.modal.push_back(std::move(mp));
        }
        auto slots = ckpt.params.trainable();
        const auto& directory = header.at("tensors");
        if (directory.size() != slots.size()) {
            throw ValidationError(path + ": tensor directory has " +
                                  std::to_string(directory.size()) + " entries, expected " +
                                  std::to_string(slots.size()));
        }
        for (std::size_t i = 0; i < slots.size(); ++i) {
            std::string name = directory[i].at("name").get<std::string>();
            if (name != slots[i].first) {
                throw ValidationError(path + ": tensor " + std::to_string(i) + " is `" + name +
                                      "`, expected `" + slots[i].first + "`");
            }
            std::vector<std::size_t> shape =
                directory[i].at("shape").get<std::vector<std::size_t>>();
            Tensor t(shape);
            read_all(f.get(), t.data(), t.numel() * sizeof(double), path);
            *slots[i].second = std::move(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": malformed checkpoint header: " + e.what());
    }
    return ckpt;
}

}  // namespace grcn
