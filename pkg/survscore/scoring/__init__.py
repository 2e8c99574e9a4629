"""
评分规则层。

职责：
1. rules：单条观测上的评分规则（纯函数）。
2. weights：由参考 CDF 计算删失权重。
3. batch：批量评分与对 logits 的梯度，供训练与蒙特卡洛校验共用。
"""
