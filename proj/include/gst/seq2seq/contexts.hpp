#pragma once

#include <vector>

#include "gst/seq2seq/train.hpp"
#include "gst/toyworld/dialog.hpp"

namespace gst::seq2seq {

/// c_t = (v, d_{<t}, q_t) for round t of a dialog.
Context answerer_context(const toyworld::Dialog& dialog, std::size_t t);
/// (v, d_{<t}) for predicting q_t.
Context questioner_context(const toyworld::Dialog& dialog, std::size_t t);

/// One example per round; `only_selected` drops rounds flagged unselected.
std::vector<Example> answerer_examples(const std::vector<toyworld::Dialog>& dialogs, int group = 0,
                                       bool only_selected = false, bool perturb = false);
std::vector<Example> questioner_examples(const std::vector<toyworld::Dialog>& dialogs);

}  // namespace gst::seq2seq
