"""Rule tables driving the mock clients. Plain data so real prompts can replace them."""

from ..tags import EMOTIONS

# Query emotion -> response delivery tone.
RESPONSE_TONE = {
    "neutral": "neutral",
    "happy": "cheerful",
    "sad": "comforting-calm",
    "angry": "serious-concerned",
    "surprised": "playful",
    "fearful": "gentle-reassuring",
    "disgusted": "serious-concerned",
}
# Age overrides applied when the instruction is age-sensitive.
AGE_TONE = {"child": "playful", "adult": "encouraging", "elderly": "gentle-reassuring"}

SEED_SENTENCES = {
    "en": [
        "I finally finished the project I was working on.",
        "The train was late again this morning.",
        "My grandmother called me yesterday.",
        "We are moving to a new city next month.",
        "I could not sleep at all last night.",
        "Someone left the door open in the rain.",
        "The test results came back today.",
        "I found an old photo of my friends.",
    ],
    "zh": [
        "我终于完成了手上的项目。",
        "今天早上火车又晚点了。",
        "我奶奶昨天给我打了电话。",
        "我们下个月要搬到新的城市。",
        "我昨晚一点都没睡着。",
        "有人下雨天把门开着走了。",
        "检查结果今天出来了。",
        "我翻到了一张和朋友们的老照片。",
    ],
}

INSTRUCTIONS = {
    "en": {
        "emotion": [
            "I just heard some news and I am not sure how to handle it. What should I do?",
            "Can you tell how I am feeling right now, and help me with it?",
            "Something happened at work today. Can we talk about it?",
        ],
        "age": [
            "Do you think I can run a marathon?",
            "Which hobby would suit someone like me?",
            "Should I learn to play the piano now?",
        ],
        "gender": [
            "What should I wear to a friend's wedding?",
            "Can you suggest a gift my partner would like from me?",
            "Which haircut would look good on me?",
        ],
        "none": [
            "How do I keep houseplants alive in winter?",
            "What is a simple way to start saving money?",
            "Can you explain why the sky looks blue?",
        ],
    },
    "zh": {
        "emotion": [
            "我刚听到一个消息，不知道该怎么面对，我该怎么办？",
            "你能听出我现在的心情吗？帮帮我吧。",
            "今天工作上发生了一件事，能陪我聊聊吗？",
        ],
        "age": [
            "你觉得我能跑马拉松吗？",
            "什么爱好适合像我这样的人？",
            "我现在学钢琴还来得及吗？",
        ],
        "gender": [
            "去朋友的婚礼我该穿什么？",
            "你能推荐一个我伴侣会喜欢的礼物吗？",
            "什么发型适合我？",
        ],
        "none": [
            "冬天怎么养好室内植物？",
            "有什么简单的办法开始存钱？",
            "你能解释一下天空为什么是蓝色的吗？",
        ],
    },
}

RESPONSES = {
    "en": {
        "neutral": ["Here is a straightforward answer.", "Let me walk you through it."],
        "cheerful": ["That is wonderful to hear!", "What great news, let's build on it!"],
        "comforting-calm": ["I'm sorry you're going through this. Take a slow breath.",
                            "That sounds really hard. You don't have to face it alone."],
        "gentle-reassuring": ["It's okay, we can take this one step at a time.",
                              "You're safe to go at your own pace."],
        "encouraging": ["You can absolutely do this.", "Start small and keep going."],
        "serious-concerned": ["I understand why that upset you. Let's look at it carefully.",
                              "That is a fair concern, and it deserves a careful answer."],
        "playful": ["Ooh, fun question!", "Now that's a surprise, let's play with it!"],
    },
    "zh": {
        "neutral": ["我直接回答你。", "我来一步步说明。"],
        "cheerful": ["太好了，真为你高兴！", "好消息！我们继续加油！"],
        "comforting-calm": ["听到这个我很难过，先慢慢深呼吸。", "这真的很不容易，你不是一个人。"],
        "gentle-reassuring": ["没关系，我们一步一步来。", "别着急，按你自己的节奏来。"],
        "encouraging": ["你一定可以的。", "从小事做起，坚持下去。"],
        "serious-concerned": ["我理解你为什么生气，我们认真看看。", "这个担心很合理，值得认真对待。"],
        "playful": ["哇，这个问题真有意思！", "真没想到，我们来玩一玩！"],
    },
}

# Default sampling marginals for seed tags.
EMOTION_MARGINALS = dict(zip(EMOTIONS, (0.30, 0.18, 0.16, 0.10, 0.10, 0.08, 0.08)))
AGE_MARGINALS = {"child": 0.2, "adult": 0.6, "elderly": 0.2}
GENDER_MARGINALS = {"female": 0.5, "male": 0.5}

# Base pitch per (gender, age) for mock voices, Hz.
BASE_PITCH = {
    ("female", "child"): 300.0, ("female", "adult"): 210.0, ("female", "elderly"): 190.0,
    ("male", "child"): 280.0, ("male", "adult"): 120.0, ("male", "elderly"): 105.0,
}
# Emotion -> (pitch scale, loudness, vibrato Hz).
EMOTION_PROSODY = {
    "neutral": (1.0, 0.30, 0.0), "happy": (1.15, 0.40, 5.0), "sad": (0.9, 0.20, 0.0),
    "angry": (1.1, 0.55, 8.0), "surprised": (1.25, 0.45, 3.0), "fearful": (1.2, 0.25, 9.0),
    "disgusted": (0.95, 0.35, 2.0),
}
RESPONSE_PROSODY = {
    "neutral": (1.0, 0.30, 0.0), "cheerful": (1.15, 0.40, 5.0), "comforting-calm": (0.92, 0.22, 0.0),
    "gentle-reassuring": (0.95, 0.25, 1.5), "encouraging": (1.08, 0.38, 3.0),
    "serious-concerned": (0.9, 0.32, 0.0), "playful": (1.2, 0.42, 6.0),
}
RESPONSE_VOICE_ID = "ref-voice-01"
