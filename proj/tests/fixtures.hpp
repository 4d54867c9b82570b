#pragma once

#include <string>
#include <vector>

#include "emde/attribution.hpp"

namespace fixture {

// Ten users over two modalities. Only u0's liked and poster top influencers
// coincide, so agreement is 1/10. Liked top scores are 0.020, 0.022, ...,
// 0.038 (mean 0.029); poster top scores are 0.5 for every user except u9
// (0.3), mean 0.48.
inline std::vector<emde::UserAttribution> agreement_users() {
  std::vector<emde::UserAttribution> users;
  for (int i = 0; i < 10; ++i) {
    emde::UserAttribution u;
    u.user_id = "u" + std::to_string(i);
    u.target_item = i < 4 ? "t1" : "t2";
    u.modalities = {"liked", "poster"};
    const double top = 0.020 + 0.002 * i;
    u.items.push_back({"liked", "m" + std::to_string(i), top});
    u.items.push_back({"liked", "m" + std::to_string(i + 10), top - 0.01});
    u.items.push_back({"liked", "m" + std::to_string(i + 20), -0.2});
    const std::string poster_top = i == 0 ? "m0" : "m" + std::to_string(i + 10);
    u.items.push_back({"poster", "m" + std::to_string(i), i == 0 ? 0.5 : 0.1});
    if (i != 0) u.items.push_back({"poster", poster_top, i == 9 ? 0.3 : 0.5});
    u.items.push_back({"poster", "m" + std::to_string(i + 20), -0.4});
    users.push_back(u);
  }
  return users;
}

inline constexpr double kAgreement = 0.1;
inline constexpr double kLikedMeanTop = 0.029;
inline constexpr double kPosterMeanTop = 0.48;

}  // namespace fixture
