#include "qfvs/video.hpp"

#include <algorithm>

namespace qfvs {

TagSet::TagSet(std::vector<int> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

bool TagSet::contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

}  // namespace qfvs
