#include "mmood/envision.hpp"

namespace mmood {

namespace {

constexpr char const* kNearBody = R"(Q: Given the image category [husky dog] and this image, please suggest visually similar categories that are not directly related or belong to the same primary group as [husky dog]. Provide suggestions that share visual characteristics but are from broader and different domains than [husky dog].

A: There are 3 classes similar to [husky dog], and they are from broader and different domains than [husky dog]:

- gray wolf

- black stone

- red panda

Q: Given the image category [basketball], please suggest visually similar categories that are not directly related or belong to the same primary group as [basketball]. Provide suggestions that share visual characteristics but are from broader and different domains than [basketball].

A: There are 3 classes similar to [basketball], and they are from broader and different domains than [basketball]:

- balloons

- blowfish

- hat

Q: Given the image category [water jug], please suggest visually similar categories that are not directly related or belong to the same primary group as [water jug]. Provide suggestions that share visual characteristics but are from broader and different domains than [water jug].

A: There are 3 classes similar to [water jug], and they are from broader and different domains than [water jug]:

- trumpets

- helmets

- rucksacks

Q: Given the image category [{class_info}] and this image, please suggest visually similar categories that are not directly related or belong to the same primary group as [{class_info}]. Provide suggestions that share visual characteristics but are from broader and different domains than [{class_info}].

A: There are {envision_nums} classes similar to [{class_info}], and they are from broader and different domains than [{class_info}]:
)";

constexpr char const* kSummarizeBody = R"(Here is the list of class labels of an image classification dataset: [{class_info}].
Summarize these labels into exactly {envision_nums} primary categories that together cover every label.
Answer with one category per line, each line starting with "- ".
)";

constexpr char const* kSketchBody = R"(The images of a dataset belong to these primary categories: [{class_info}].
Sketch {envision_nums} labels of objects, scenes or textures that are far away from all of these categories, both visually and semantically.
Answer with one label per line, each line starting with "- ".
)";

constexpr char const* kSelectBody = R"(From the labels you just sketched, choose the one label that is most dissimilar to the categories [{class_info}].
Answer with a single line starting with "- ".
)";

constexpr char const* kElaborateBody = R"(The attached image shows something outside the categories [{class_info}].
Using this image and the labels above as a guide, list {envision_nums} labels of classes that are far from [{class_info}] in both appearance and meaning.
Answer with one label per line, each line starting with "- ".
)";

} // namespace

PromptSet PromptSet::defaults()
{
    return {
        PromptTemplate("near", kNearBody, true),
        PromptTemplate("summarize", kSummarizeBody, false),
        PromptTemplate("sketch", kSketchBody, false),
        PromptTemplate("select", kSelectBody, false),
        PromptTemplate("elaborate", kElaborateBody, true),
    };
}

} // namespace mmood
