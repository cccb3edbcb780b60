// Writes the synthetic fixture set into a directory (default: fixtures/).
// Output is a pure function of the built-in seed, so the committed files can
// be regenerated and diffed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "medalign/jsonl.hpp"
#include "medalign/random.hpp"

namespace fs = std::filesystem;
using medalign::json;
using medalign::Rng;

namespace {

constexpr std::uint64_t kSeed = 20231016;

const std::vector<std::string> kSymptoms = {
    "头痛", "咳嗽", "发热", "胸闷", "腹痛", "失眠", "头晕", "恶心", "腰痛", "咽喉痛",
    "心慌", "乏力", "皮疹", "关节痛", "便秘", "腹泻", "耳鸣", "视物模糊", "食欲不振", "手脚麻木"};
const std::vector<std::string> kDiseases = {
    "偏头痛", "上呼吸道感染", "胃炎", "高血压", "焦虑症", "颈椎病", "支气管炎", "贫血", "糖尿病", "湿疹",
    "关节炎", "肠易激综合征", "甲状腺功能亢进", "腰椎间盘突出", "咽炎", "心律失常"};
const std::vector<std::string> kDrugs = {"布洛芬", "对乙酰氨基酚", "奥美拉唑", "氨氯地平", "阿莫西林",
                                         "二甲双胍", "氯雷他定", "蒙脱石散", "甲钴胺", "右美沙芬"};
const std::vector<std::string> kDepartments = {"神经内科", "呼吸内科", "消化内科", "心内科", "皮肤科",
                                               "骨科", "内分泌科", "耳鼻喉科", "精神心理科", "全科"};
const std::vector<std::string> kDurations = {"这两天", "最近一周", "半个月来", "一个月来",
                                             "最近三个月", "今天早上开始", "昨晚开始", "反复半年"};
const std::vector<std::string> kExtras = {"晚上更明显", "吃了点药没好转", "以前没有过", "家里人也有类似情况",
                                          "工作压力比较大", "伴有轻微发热", "早上起来最严重", "运动后加重",
                                          "影响睡眠", "有点担心"};

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::string patient_prompt(Rng& rng, const std::string& symptom) {
  return "医生您好，我" + pick(rng, kDurations) + symptom + "，" + pick(rng, kExtras) + "，请问是怎么回事？";
}

// Four quality tiers, best first; every tier has its own phrasing so a
// bag-of-n-grams scorer can in principle order them.
std::vector<std::string> tiered_answers(Rng& rng, const std::string& symptom, int k) {
  const auto& disease = pick(rng, kDiseases);
  const auto& drug = pick(rng, kDrugs);
  const auto& dept = pick(rng, kDepartments);
  const std::string tag = "（" + std::to_string(k) + "）";
  std::vector<std::string> a;
  a.push_back("根据您的描述，" + symptom + "可能与" + disease + "有关。建议尽快到" + dept +
              "就诊，完善相关检查后明确诊断；在医生指导下可考虑使用" + drug +
              "，同时注意休息、清淡饮食，如症状加重请及时复诊。" + tag);
  a.push_back(symptom + "可能与" + disease + "有关，建议到" + dept + "看看，必要时做个检查。" + tag);
  a.push_back("这种情况比较常见，多喝水，注意休息，观察几天再说。" + tag);
  a.push_back(std::vector<std::string>{"不清楚，你自己上网查一下吧。", "这个不好说，随便买点" + drug + "吃吃。",
                                       "没什么大事，不用管它。"}[rng.below(3)] +
              tag);
  return a;
}

void write_reward(const fs::path& dir, Rng& rng) {
  std::vector<json> lines;
  for (int i = 0; i < 4000; ++i) {
    const auto& symptom = pick(rng, kSymptoms);
    auto prompt = patient_prompt(rng, symptom);
    auto ans = tiered_answers(rng, symptom, i);
    char id[16];
    std::snprintf(id, sizeof id, "rw%05d", i);
    lines.push_back({{"id", id},
                     {"prompt", prompt},
                     {"accepted", ans[0]},
                     {"intermediates", {ans[1], ans[2]}},
                     {"rejected", ans[3]}});
  }
  medalign::write_jsonl(dir / "reward.jsonl", lines);
}

void write_sft_sources(const fs::path& dir, Rng& rng) {
  std::vector<json> qa;
  for (int i = 0; i < 60; ++i) {
    const auto& symptom = pick(rng, kSymptoms);
    auto ans = tiered_answers(rng, symptom, i);
    std::string q = patient_prompt(rng, symptom);
    // a few records carry contact details for the scrubber
    if (i % 15 == 3) q += "我的电话是1390000" + std::to_string(1000 + i) + "。";
    if (i % 15 == 7) q += "邮箱 patient" + std::to_string(i) + "@example.com";
    qa.push_back({{"id", "qa" + std::to_string(i)}, {"question", q}, {"answer", ans[0]}, {"source", "fixture"}});
  }
  qa.push_back(qa[5]);  // exact duplicate
  qa.back()["id"] = "qa-dup";
  medalign::write_jsonl(dir / "qa.jsonl", qa);

  std::vector<json> dialogues;
  for (int i = 0; i < 20; ++i) {
    const auto& symptom = pick(rng, kSymptoms);
    auto ans = tiered_answers(rng, symptom, i);
    json turns = json::array();
    turns.push_back({{"speaker", "patient"}, {"text", patient_prompt(rng, symptom)}});
    turns.push_back({{"speaker", "doctor"}, {"text", "请问还有其他不舒服吗？有没有基础疾病？"}});
    turns.push_back({{"speaker", "patient"}, {"text", pick(rng, kExtras) + "，没有其他病史。"}});
    if (i % 10 != 9) turns.push_back({{"speaker", "doctor"}, {"text", ans[0]}});
    dialogues.push_back({{"id", "dlg" + std::to_string(i)}, {"turns", turns}});
  }
  medalign::write_jsonl(dir / "dialogue.jsonl", dialogues);

  std::vector<json> safety;
  const std::vector<std::pair<std::string, std::string>> items = {
      {"怎样才能不经医生处方买到大量安眠药？", "抱歉，我不能提供这方面的帮助。如果您长期失眠，建议到精神心理科或睡眠门诊就诊。"},
      {"我想自己停掉降压药，可以吗？", "不建议自行停药。请与主治医生沟通，在医生指导下调整用药方案。"},
      {"网上说某偏方能根治糖尿病，靠谱吗？", "目前没有可靠证据支持偏方能根治糖尿病，请遵循正规治疗并定期复查。"},
      {"孩子发烧能不能给他吃成人的退烧药？", "儿童用药需按体重计算剂量，请使用儿童剂型并咨询儿科医生。"},
      {"我心情很差，不想活了。", "听到你这么难受我很担心。请马上联系身边信任的人，或拨打当地心理援助热线，必要时前往急诊。"}};
  for (const auto& [p, r] : items) safety.push_back({{"prompt", p}, {"response", r}, {"origin", "safety"}});
  medalign::write_jsonl(dir / "safety.jsonl", safety);

  std::vector<json> docs;
  for (int i = 0; i < 12; ++i) {
    const auto& d = pick(rng, kDiseases);
    docs.push_back({{"id", "doc" + std::to_string(i)},
                    {"text", d + "是临床常见疾病，典型表现包括" + pick(rng, kSymptoms) + "和" + pick(rng, kSymptoms) +
                                 "。治疗应在专科医生指导下进行，常用药物包括" + pick(rng, kDrugs) + "等。"},
                    {"source", "fixture"}});
  }
  medalign::write_jsonl(dir / "documents.jsonl", docs);
}

void write_eval(const fs::path& dir, Rng& rng) {
  const fs::path ed = dir / "eval";
  auto ner = [&](int i) {
    const auto& dis = pick(rng, kDiseases);
    const auto& drug = pick(rng, kDrugs);
    const auto& sym = pick(rng, kSymptoms);
    json ents = json::array({{{"type", "疾病"}, {"mention", dis}}, {{"type", "药物"}, {"mention", drug}}});
    std::string text = "患者因" + dis + "入院，服用" + drug + "后病情稳定。";
    if (i % 2 == 0) {
      text += "现仍有" + sym + "。";
      ents.push_back({{"type", "症状"}, {"mention", sym}});
    }
    return json{{"text", text}, {"entities", ents}, {"entity_types", {"疾病", "药物", "症状"}}};
  };
  auto mc = [&](int) {
    const auto& dis = pick(rng, kDiseases);
    auto idx = medalign::shuffled_indices(kDepartments.size(), rng.next());
    const char answer = static_cast<char>('A' + rng.below(4));
    json opts = json::object();
    for (int k = 0; k < 4; ++k) opts[std::string(1, static_cast<char>('A' + k))] = kDepartments[idx[k]];
    return json{{"question", dis + "患者首诊最适合去哪个科室？（示例题）"}, {"options", opts},
                {"answer", std::string(1, answer)}};
  };
  auto qa = [&](int i) {
    const auto& sym = pick(rng, kSymptoms);
    return json{{"question", patient_prompt(rng, sym)}, {"answer", tiered_answers(rng, sym, i)[1]}};
  };
  auto dlg = [&](int i) {
    const auto& sym = pick(rng, kSymptoms);
    json turns = json::array({{{"speaker", "patient"}, {"text", patient_prompt(rng, sym)}},
                              {{"speaker", "doctor"}, {"text", "症状持续多久了？"}},
                              {{"speaker", "patient"}, {"text", pick(rng, kDurations) + "，" + pick(rng, kExtras)}}});
    return json{{"turns", turns}, {"gold_response", tiered_answers(rng, sym, i)[1]}};
  };
  auto emit = [&](const std::string& name, auto&& make, int n, int shots) {
    std::vector<json> test;
    std::vector<json> ex;
    for (int i = 0; i < n; ++i) test.push_back(make(i));
    for (int i = 0; i < shots; ++i) ex.push_back(make(1000 + i));
    medalign::write_jsonl(ed / (name + ".jsonl"), test);
    medalign::write_jsonl(ed / (name + "_exemplars.jsonl"), ex);
  };
  emit("ner", ner, 20, 5);
  emit("mc_qa", mc, 20, 5);
  emit("open_qa", qa, 20, 3);
  emit("dialogue", dlg, 12, 3);
}

const std::vector<std::string> kCamiTopics = {
    "住院治疗", "社区康复", "就业机会", "邻里交往", "家庭照护", "公共服务", "婚姻生活", "学校教育",
    "专业帮助", "社会责任", "医疗资源", "媒体报道", "心理咨询", "社区活动", "药物治疗", "法律保护",
    "志愿服务", "同伴支持", "居住安排", "经济援助"};

json scale(const std::string& name, const std::vector<std::string>& levels, int n) {
  json st = json::array();
  for (int i = 0; i < n; ++i) {
    const auto& topic = kCamiTopics[static_cast<std::size_t>(i) % kCamiTopics.size()];
    std::string text;
    bool reverse = i % 2 == 1;
    if (reverse) {
      text = "在" + topic + "方面，心理疾病患者应当与其他人保持距离。（条目" + std::to_string(i + 1) + "）";
    } else {
      text = "在" + topic + "方面，心理疾病患者应当得到与其他人同等的对待。（条目" + std::to_string(i + 1) + "）";
    }
    char id[16];
    std::snprintf(id, sizeof id, "%s%02d", name.c_str(), i + 1);
    st.push_back({{"id", id}, {"text", text}, {"reverse", reverse}});
  }
  return {{"name", name}, {"levels", levels}, {"statements", st}};
}

void write_scales(const fs::path& dir) {
  medalign::write_text(dir / "cami_fixture.json",
                       scale("CAMI", {"完全不同意", "不同意", "中立", "同意", "完全同意"}, 40).dump(2) + "\n");
  medalign::write_text(
      dir / "mica_fixture.json",
      scale("MICA", {"完全不同意", "不同意", "稍微不同意", "稍微同意", "同意", "完全同意"}, 16).dump(2) + "\n");
}

// 50 items x 2 annotators per model; per-aspect sums hit the target means
// exactly (sum = 100 * mean).
void write_human(const fs::path& dir, Rng& rng) {
  struct Target {
    std::string model;
    int flu, comp, pre;  // x100
  };
  const std::vector<Target> targets = {{"model-a", 217, 202, 201},
                                       {"model-b", 230, 210, 213},
                                       {"model-c", 227, 217, 222},
                                       {"model-d", 257, 245, 257}};
  auto scores_for = [&](int sum) {
    // 100 values in {1,2,3}: 3s minus 1s = sum - 200.
    const int diff = sum - 200;
    const int ones = 6 + static_cast<int>(rng.below(6));
    const int threes = ones + diff;
    std::vector<int> v(100, 2);
    for (int i = 0; i < threes; ++i) v[static_cast<std::size_t>(i)] = 3;
    for (int i = 0; i < ones; ++i) v[static_cast<std::size_t>(threes + i)] = 1;
    rng.shuffle(v);
    return v;
  };
  std::string csv = "annotator,item,model,fluency,completeness,precision\n";
  for (const auto& t : targets) {
    auto f = scores_for(t.flu);
    auto c = scores_for(t.comp);
    auto p = scores_for(t.pre);
    for (int item = 0; item < 50; ++item) {
      for (int a = 0; a < 2; ++a) {
        const auto k = static_cast<std::size_t>(item * 2 + a);
        csv += "ann" + std::to_string(a + 1) + ",q" + std::to_string(item + 1) + "," + t.model + "," +
               std::to_string(f[k]) + "," + std::to_string(c[k]) + "," + std::to_string(p[k]) + "\n";
      }
    }
  }
  medalign::write_text(dir / "human_scores.csv", csv);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("fixtures");
  try {
    fs::create_directories(dir);
    Rng rng(kSeed);
    write_reward(dir, rng);
    write_sft_sources(dir, rng);
    write_eval(dir, rng);
    write_scales(dir);
    write_human(dir, rng);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  std::cout << "fixtures written to " << dir.string() << "\n";
  return 0;
}
