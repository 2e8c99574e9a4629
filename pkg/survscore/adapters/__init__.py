"""
外部文件适配层。

职责：
1. 读取观测 CSV 与预测 CSV，逐行校验并给出带行号的错误。
2. 写出数据集 CSV 与通用表格 CSV。
"""
