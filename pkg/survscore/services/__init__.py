"""
服务编排层。

职责：
1. models：softmax 输出的分组查表模型与线性模型。
2. training：经验损失、梯度、全批量梯度下降与迭代重加权（IR）。
3. grid_search：按分位水平递增顺序的网格搜索分位估计。
4. oracle：分段线性真值、精确期望与 properness 检查。
5. 不放 CLI 与文件格式细节。
"""
