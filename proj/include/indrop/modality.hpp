#pragma once

// Spatially aligned multimodal image stacks and input-dropout masking.
//
// A stack holds one canonical modality (always available at inference, e.g.
// "rgb") plus additional modalities as extra channels. Training-time masking
// zeroes whole modalities per sample; inference-time masking deterministically
// zeroes everything that is unavailable.

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

namespace indrop::modality {

struct ModalityEntry {
    std::string name;
    int channels = 0;
};

// Ordered map of modality name -> contiguous channel range. Exactly one
// entry is the canonical modality.
class ModalityLayout {
public:
    ModalityLayout() = default;
    ModalityLayout(std::vector<ModalityEntry> entries, const std::string& canonical)
        : entries_(std::move(entries)) {
        if (entries_.empty())
            throw std::invalid_argument("ModalityLayout: no entries");
        int offset = 0;
        canonical_ = -1;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (e.name.empty())
                throw std::invalid_argument("ModalityLayout: empty modality name");
            if (e.channels <= 0)
                throw std::invalid_argument("ModalityLayout: non-positive channel count for '" + e.name + "'");
            for (std::size_t j = 0; j < i; ++j)
                if (entries_[j].name == e.name)
                    throw std::invalid_argument("ModalityLayout: duplicate modality '" + e.name + "'");
            offsets_.push_back(offset);
            offset += e.channels;
            if (e.name == canonical) canonical_ = static_cast<int>(i);
        }
        total_ = offset;
        if (canonical_ < 0)
            throw std::invalid_argument("ModalityLayout: canonical modality '" + canonical + "' not present");
    }

    int total_channels() const { return total_; }
    std::size_t count() const { return entries_.size(); }
    const std::vector<ModalityEntry>& entries() const { return entries_; }
    const std::string& canonical_name() const { return entries_[canonical_].name; }

    bool has(const std::string& name) const { return find(name) >= 0; }

    // channel range [first, last) of a modality
    std::pair<int, int> range(const std::string& name) const {
        const int i = find(name);
        if (i < 0) throw std::invalid_argument("ModalityLayout: unknown modality '" + name + "'");
        return {offsets_[i], offsets_[i] + entries_[i].channels};
    }

    bool operator==(const ModalityLayout& o) const {
        if (entries_.size() != o.entries_.size() || canonical_ != o.canonical_) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name != o.entries_[i].name ||
                entries_[i].channels != o.entries_[i].channels)
                return false;
        return true;
    }

private:
    int find(const std::string& name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<ModalityEntry> entries_;
    std::vector<int> offsets_;
    int canonical_ = -1;
    int total_ = 0;
};

struct MultimodalBatch {
    Tensor data;  // N x C x H x W
    ModalityLayout layout;

    MultimodalBatch() = default;
    MultimodalBatch(Tensor data_, ModalityLayout layout_)
        : data(std::move(data_)), layout(std::move(layout_)) {
        if (data.c != layout.total_channels())
            throw std::invalid_argument("MultimodalBatch: tensor has " + std::to_string(data.c) +
                                        " channels, layout expects " +
                                        std::to_string(layout.total_channels()));
    }
};

enum class DropoutMode { addit, both };

enum class MaskCase { kept_all, dropped_additional, dropped_canonical };

inline const char* to_string(MaskCase c) {
    switch (c) {
        case MaskCase::kept_all: return "kept_all";
        case MaskCase::dropped_additional: return "dropped_additional";
        case MaskCase::dropped_canonical: return "dropped_canonical";
    }
    return "?";
}

// Per-sample stochastic masking policy. In addit mode the additional modality
// is dropped with probability p_drop (default 0.5) and the canonical one is
// never touched. In both mode either modality may be dropped, each with
// probability p_drop (default 1/3), drawn as one categorical per sample so the
// three cases {keep-all, drop-additional, drop-canonical} are uniform at the
// default.
struct DropoutPolicy {
    DropoutMode mode = DropoutMode::addit;
    double p_drop;
    std::string rng_stream = "mask";

    explicit DropoutPolicy(DropoutMode m = DropoutMode::addit)
        : mode(m), p_drop(m == DropoutMode::addit ? 0.5 : 1.0 / 3.0) {}
    DropoutPolicy(DropoutMode m, double p, std::string stream = "mask")
        : mode(m), p_drop(p), rng_stream(std::move(stream)) {
        validate();
    }

    void validate() const {
        if (!(p_drop >= 0.0 && p_drop <= 1.0))
            throw std::invalid_argument("DropoutPolicy: p_drop outside [0,1]");
        if (mode == DropoutMode::both && p_drop > 0.5)
            throw std::invalid_argument("DropoutPolicy: both mode needs p_drop <= 0.5 (two drop cases)");
    }
};

// Per-sample case labels, the audit trail for masking statistics.
using MaskRecord = std::vector<MaskCase>;

enum class Phase { train, eval };

// Stack per-modality tensors into one multimodal batch, channels in list order.
inline MultimodalBatch concat_modalities(
    const std::vector<std::pair<std::string, Tensor>>& parts,
    const std::string& canonical) {
    if (parts.empty()) throw std::invalid_argument("concat_modalities: no parts");
    const Tensor& first = parts.front().second;
    std::vector<ModalityEntry> entries;
    int total_c = 0;
    for (const auto& [name, t] : parts) {
        if (t.n != first.n || t.h != first.h || t.w != first.w)
            throw std::invalid_argument("concat_modalities: part '" + name +
                                        "' is not aligned with the first part (" +
                                        t.shape_str() + " vs " + first.shape_str() + ")");
        entries.push_back({name, t.c});
        total_c += t.c;
    }
    ModalityLayout layout(entries, canonical);  // rejects duplicates / bad names
    Tensor data(first.n, total_c, first.h, first.w);
    int c_off = 0;
    for (const auto& [name, t] : parts) {
        for (int i = 0; i < t.n; ++i)
            for (int j = 0; j < t.c; ++j)
                for (int y = 0; y < t.h; ++y)
                    for (int x = 0; x < t.w; ++x)
                        data.at(i, c_off + j, y, x) = t.at(i, j, y, x);
        c_off += t.c;
    }
    return MultimodalBatch(std::move(data), std::move(layout));
}

// Deterministically zero every modality that is not in `available`.
// The canonical modality is assumed present and must be listed.
inline MultimodalBatch mask_for_inference(const MultimodalBatch& batch,
                                          const std::vector<std::string>& available) {
    const auto& layout = batch.layout;
    bool canonical_ok = false;
    for (const auto& name : available) {
        if (!layout.has(name))
            throw std::invalid_argument("mask_for_inference: '" + name + "' not in layout");
        if (name == layout.canonical_name()) canonical_ok = true;
    }
    if (!canonical_ok)
        throw std::invalid_argument("mask_for_inference: canonical modality '" +
                                    layout.canonical_name() + "' must be available");
    MultimodalBatch out = batch;
    for (const auto& e : layout.entries()) {
        bool avail = false;
        for (const auto& name : available)
            if (name == e.name) { avail = true; break; }
        if (avail) continue;
        const auto [c0, c1] = layout.range(e.name);
        for (int i = 0; i < out.data.n; ++i)
            for (int j = c0; j < c1; ++j)
                for (int y = 0; y < out.data.h; ++y)
                    for (int x = 0; x < out.data.w; ++x)
                        out.data.at(i, j, y, x) = 0.0;
    }
    return out;
}

namespace detail {
inline MaskCase draw_case(const DropoutPolicy& policy, RngStream& rng) {
    const double u = rng.uniform();
    if (policy.mode == DropoutMode::addit)
        return u < policy.p_drop ? MaskCase::dropped_additional : MaskCase::kept_all;
    if (u < policy.p_drop) return MaskCase::dropped_additional;
    if (u < 2.0 * policy.p_drop) return MaskCase::dropped_canonical;
    return MaskCase::kept_all;
}
}  // namespace detail

// Input dropout. Train phase: one case drawn per sample, the dropped
// modality's channels zeroed, everything else bit-identical. Eval phase: the
// additional modality is zeroed deterministically for all samples (the RNG is
// not consumed).
inline std::pair<MultimodalBatch, MaskRecord> apply_input_dropout(
    const MultimodalBatch& batch, const DropoutPolicy& policy, Phase phase,
    RngStream& rng) {
    policy.validate();
    const auto& layout = batch.layout;
    if (layout.count() != 2)
        throw std::invalid_argument(
            "apply_input_dropout: layout must have exactly two modalities "
            "(one canonical + one additional), got " + std::to_string(layout.count()));
    std::string additional;
    for (const auto& e : layout.entries())
        if (e.name != layout.canonical_name()) additional = e.name;

    if (phase == Phase::eval) {
        MaskRecord record(batch.data.n, MaskCase::dropped_additional);
        return {mask_for_inference(batch, {layout.canonical_name()}), std::move(record)};
    }

    MultimodalBatch out = batch;
    MaskRecord record(batch.data.n, MaskCase::kept_all);
    const auto [a0, a1] = layout.range(additional);
    const auto [c0, c1] = layout.range(layout.canonical_name());
    for (int i = 0; i < batch.data.n; ++i) {
        const MaskCase mc = detail::draw_case(policy, rng);
        record[i] = mc;
        int z0 = 0, z1 = 0;
        if (mc == MaskCase::dropped_additional) { z0 = a0; z1 = a1; }
        else if (mc == MaskCase::dropped_canonical) { z0 = c0; z1 = c1; }
        else continue;
        for (int j = z0; j < z1; ++j)
            for (int y = 0; y < batch.data.h; ++y)
                for (int x = 0; x < batch.data.w; ++x)
                    out.data.at(i, j, y, x) = 0.0;
    }
    return {std::move(out), std::move(record)};
}

// Empirical per-case frequencies over a list of mask records.
inline std::map<MaskCase, double> mask_statistics(const std::vector<MaskRecord>& records) {
    std::size_t total = 0;
    std::map<MaskCase, std::size_t> counts;
    for (const auto& r : records) {
        for (MaskCase c : r) ++counts[c];
        total += r.size();
    }
    if (total == 0) throw std::invalid_argument("mask_statistics: no samples");
    std::map<MaskCase, double> freq;
    for (const auto& [c, k] : counts)
        freq[c] = static_cast<double>(k) / static_cast<double>(total);
    return freq;
}

}  // namespace indrop::modality
