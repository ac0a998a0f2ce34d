#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "qfvs/real.hpp"

namespace qfvs {

// Concept ids annotated on one shot, sorted and unique.
class TagSet {
   public:
    TagSet() = default;
    TagSet(std::initializer_list<int> ids) : TagSet(std::vector<int>(ids)) {}
    explicit TagSet(std::vector<int> ids);

    const std::vector<int>& ids() const { return ids_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    bool contains(int id) const;

    bool operator==(const TagSet&) const = default;

   private:
    std::vector<int> ids_;
};

// A video as ordered, non-overlapping shots with one feature row and one tag
// set each.
struct ShotSequence {
    std::string video_id;
    std::size_t feature_dim = 0;
    std::vector<real> features;  // size() * feature_dim, row-major
    std::vector<TagSet> tags;
    real shot_seconds = 5;

    std::size_t size() const { return tags.size(); }
    std::span<const real> feature(std::size_t shot) const {
        return std::span<const real>(features).subspan(shot * feature_dim, feature_dim);
    }

    bool operator==(const ShotSequence&) const = default;
};

}  // namespace qfvs
