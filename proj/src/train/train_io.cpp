#include "json.hpp"
#include "selfcon/train/train.hpp"

namespace selfcon::train {

using nlohmann::json;

TrainConfig train_config_from_fields(const JsonFields& f, TrainConfig c) {
  f.allow_only({"beta", "lr", "epochs", "batch_size", "grad_accumulation", "weight_decay", "grad_clip", "lora_rank",
                "lora_alpha", "score_scale", "score_weighting", "append_eos", "seed"});
  f.read("beta", c.beta);
  f.read("lr", c.lr);
  f.read("epochs", c.epochs);
  f.read("batch_size", c.batch_size);
  f.read("grad_accumulation", c.grad_accumulation);
  f.read("weight_decay", c.weight_decay);
  f.read("grad_clip", c.grad_clip);
  f.read("lora_rank", c.lora_rank);
  f.read("lora_alpha", c.lora_alpha);
  f.read("score_scale", c.score_scale);
  f.read("score_weighting", c.score_weighting);
  f.read("append_eos", c.append_eos);
  f.read("seed", c.seed);
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  return json{{"beta", c.beta},
              {"lr", c.lr},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"grad_accumulation", c.grad_accumulation},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"lora_rank", c.lora_rank},
              {"lora_alpha", c.lora_alpha},
              {"score_scale", c.score_scale},
              {"score_weighting", c.score_weighting},
              {"append_eos", c.append_eos},
              {"seed", c.seed}}
      .dump();
}

}  // namespace selfcon::train
