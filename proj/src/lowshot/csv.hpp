#pragma once

#include <string>
#include <vector>

namespace lowshot {

// One row per image per method per sweep cell.
inline constexpr const char* kResultCsvHeader = "task,ratio,S,loss,method,seed,image_id,psnr,wall_ms";

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace lowshot
