# 属性测试模块
