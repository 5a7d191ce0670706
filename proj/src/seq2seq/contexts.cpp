#include "gst/seq2seq/contexts.hpp"

namespace gst::seq2seq {

Context answerer_context(const toyworld::Dialog& dialog, std::size_t t) {
  Context ctx;
  ctx.features = dialog.features;
  ctx.history = toyworld::history_before(dialog, t);
  ctx.question = dialog.rounds.at(t).question;
  return ctx;
}

Context questioner_context(const toyworld::Dialog& dialog, std::size_t t) {
  Context ctx;
  ctx.features = dialog.features;
  ctx.history = toyworld::history_before(dialog, t);
  return ctx;
}

std::vector<Example> answerer_examples(const std::vector<toyworld::Dialog>& dialogs, int group,
                                       bool only_selected, bool perturb) {
  std::vector<Example> out;
  for (const auto& d : dialogs) {
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      if (only_selected && !d.rounds[t].selected) continue;
      Example ex;
      ex.ctx = answerer_context(d, t);
      ex.target = with_eos(d.rounds[t].answer);
      ex.group = group;
      ex.perturb = perturb;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<Example> questioner_examples(const std::vector<toyworld::Dialog>& dialogs) {
  std::vector<Example> out;
  for (const auto& d : dialogs) {
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      Example ex;
      ex.ctx = questioner_context(d, t);
      ex.target = with_eos(d.rounds[t].question);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace gst::seq2seq
