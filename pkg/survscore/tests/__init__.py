"""
survscore 测试包。

职责：
1. 放置领域对象、评分规则、权重、指标、训练、oracle 与 CLI 的契约测试。
2. 保证数值约定（右闭分箱、1e-12 下限、确定性）在改动后保持稳定。
"""
