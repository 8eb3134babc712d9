#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "iarn/iarn.hpp"

namespace iarn::testing {

/// 10 users x 10 items, 50 interactions: user u rates items u..u+4 (mod 10), integer ratings 1-5.
inline InteractionLog memorization_log(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> rating(1, 5);
  std::vector<std::int64_t> times(50);
  std::iota(times.begin(), times.end(), 1);
  std::shuffle(times.begin(), times.end(), rng);
  InteractionLog log;
  for (int u = 0; u < 10; ++u) log.users.intern("u" + std::to_string(u));
  for (int i = 0; i < 10; ++i) log.items.intern("i" + std::to_string(i));
  for (std::uint32_t u = 0; u < 10; ++u) {
    for (std::uint32_t k = 0; k < 5; ++k) {
      log.records.push_back({u, (u + k) % 10, static_cast<double>(rating(rng)), times[u * 5 + k]});
    }
  }
  return log;
}

struct TwoStyleData {
  InteractionLog train;
  InteractionLog test;
  std::vector<int> user_style;
  std::vector<int> item_style;
  FeatureTaxonomy taxonomy;  // root per style, leaf sub-features below
};

struct TwoStyleConfig {
  int users = 200;
  int items = 100;
  int train_per_user = 22;
  int test_per_user = 4;
  double same_style_rate = 0.8;  // probability a user picks an item of their own style
  double noise = 0.3;
  int leaves_per_style = 5;
  std::int64_t cutoff = 1'000'000;
};

/// Users and items carry one of two latent styles; rating is 5 on a style match and 1 otherwise,
/// plus Gaussian noise. Users mostly pick items of their own style, so sequences reveal the style.
/// Every user and item ends up with at least 20 training interactions.
inline TwoStyleData two_style_data(std::uint64_t seed, const TwoStyleConfig& cfg = {}) {
  std::mt19937_64 rng(seed);
  TwoStyleData d;
  for (int attempt = 0;; ++attempt) {
    d = TwoStyleData{};
    d.user_style.resize(cfg.users);
    d.item_style.resize(cfg.items);
    std::vector<std::vector<std::uint32_t>> by_style(2);
    for (int i = 0; i < cfg.items; ++i) {
      d.item_style[i] = i % 2;
      by_style[i % 2].push_back(static_cast<std::uint32_t>(i));
    }
    for (int u = 0; u < cfg.users; ++u) d.user_style[u] = u % 2;

    for (auto* log : {&d.train, &d.test}) {
      for (int u = 0; u < cfg.users; ++u) log->users.intern("u" + std::to_string(u));
      for (int i = 0; i < cfg.items; ++i) log->items.intern("i" + std::to_string(i));
    }
    std::bernoulli_distribution same(cfg.same_style_rate);
    std::normal_distribution<double> noise(0.0, cfg.noise);
    std::uniform_int_distribution<std::int64_t> train_time(0, cfg.cutoff - 1), test_time(cfg.cutoff, 2 * cfg.cutoff);
    std::vector<int> item_train(cfg.items, 0);
    for (int u = 0; u < cfg.users; ++u) {
      std::vector<std::uint32_t> picked;
      const int total = cfg.train_per_user + cfg.test_per_user;
      while (static_cast<int>(picked.size()) < total) {
        const int style = same(rng) ? d.user_style[u] : 1 - d.user_style[u];
        const auto& pool = by_style[style];
        const auto item = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        if (std::find(picked.begin(), picked.end(), item) == picked.end()) picked.push_back(item);
      }
      for (int k = 0; k < total; ++k) {
        const auto item = picked[k];
        const double rating = (d.user_style[u] == d.item_style[item] ? 5.0 : 1.0) + noise(rng);
        const bool is_train = k < cfg.train_per_user;
        if (is_train) ++item_train[item];
        (is_train ? d.train : d.test)
            .records.push_back({static_cast<std::uint32_t>(u), item, rating, is_train ? train_time(rng) : test_time(rng)});
      }
    }
    if (*std::min_element(item_train.begin(), item_train.end()) >= 20 || attempt > 100) break;
  }

  // Two-level hierarchy: one root per style with `leaves_per_style` leaves; items get one leaf.
  auto& tax = d.taxonomy;
  for (int s = 0; s < 2; ++s) {
    tax.features.intern("style" + std::to_string(s));
    tax.parent.push_back(std::nullopt);
  }
  for (int s = 0; s < 2; ++s) {
    for (int l = 0; l < cfg.leaves_per_style; ++l) {
      tax.features.intern("style" + std::to_string(s) + ".sub" + std::to_string(l));
      tax.parent.push_back(static_cast<std::uint32_t>(s));
    }
  }
  tax.item_features.resize(cfg.items);
  for (int i = 0; i < cfg.items; ++i) {
    const int s = d.item_style[i];
    const int leaf = (i / 2) % cfg.leaves_per_style;
    tax.item_features[i] = {static_cast<std::uint32_t>(2 + s * cfg.leaves_per_style + leaf)};
  }
  return d;
}

}  // namespace iarn::testing
